import os
import sys

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

try:
    from threadpoolctl import threadpool_limits

    # this box runs small gemms faster single threaded; workers re-apply it
    threadpool_limits(1)
except ImportError:
    pass

sys.path.insert(0, os.path.dirname(__file__))
