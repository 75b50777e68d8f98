'''
@author: tempo-bench developers
'''
import sys
from tempo_bench import console

sys.exit(console.execute())
