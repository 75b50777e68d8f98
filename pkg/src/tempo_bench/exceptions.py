'''
@author: tempo-bench developers
'''

class AppException(Exception):
    pass

class ConfigException(AppException):
    pass

class TrajectoryBoundsException(ConfigException):
    def __init__(self, frame, message=None):
        super(TrajectoryBoundsException, self).__init__(
            message or "trajectory leaves world bounds at frame %d" % frame
        )
        self.frame = frame

class DatasetMissingException(ConfigException):
    pass

class DataException(AppException):
    pass

class GeometryMismatchException(DataException):
    pass

class DatasetFormatException(DataException):
    pass

class InsufficientDataException(DataException):
    pass

class StatisticsException(DataException):
    pass

class FusionException(DataException):
    pass
