"""Error taxonomy shared by the pipeline, service, and CLI.

UsageError: the request itself is malformed (bad mode, out-of-range knobs).
DataError: an input file or artifact is unreadable, corrupt, or mismatched.
"""


class UsageError(Exception):
    pass


class DataError(Exception):
    pass
