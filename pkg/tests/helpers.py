import numpy as np

from vsec_lda.corpus import make_corpus
from vsec_lda.sampler import Hyperparams, init_state, recount


def state_from(docs, z, y, K, C, T, alpha=0.5, beta=0.3, gamma=0.2, eps=1e-6, seed=0):
    """ModelState holding exactly the given assignments."""
    corpus = make_corpus(docs, C, T)
    hyper = Hyperparams(K=K, alpha=alpha, beta=beta, gamma=gamma, epsilon=eps, seed=seed)
    state = init_state(corpus, hyper)
    state.z = np.asarray([k for zd in z for k in zd], dtype=np.int64)
    state.y = np.asarray([k for yd in y for k in yd], dtype=np.int64)
    for name, arr in recount(state).items():
        setattr(state, name, arr)
    return state, hyper
