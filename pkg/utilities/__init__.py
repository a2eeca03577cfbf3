from .partial_trace import partial_trace

from .kron_all import kron_all

from .random_unitary import random_unitary

from .best_rational import best_rational

from .encode_matrix import encode_matrix

from .decode_matrix import decode_matrix

from .input_digest import input_digest
