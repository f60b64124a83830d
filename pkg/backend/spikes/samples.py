import io

from .services import EventSequence, parse_spike_file

# 11 events over 5 sources, one tick per second
WORKED_EXAMPLE_FILE = """\
# labels=A,B,C,D,E
1,0
3,1
5,3
5,0
6,2
10,0
15,4
15,1
17,1
18,2
19,2
"""

A, B, C, D, E = range(5)


def worked_example() -> EventSequence:
    return parse_spike_file(io.BytesIO(WORKED_EXAMPLE_FILE.encode('utf-8')), delta_t=1.0)
