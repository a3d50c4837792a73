"""
Seed derivation.

A run has one master seed. Every consumer (shuffle order, code learner init,
exemplar draw, CV folds, network init, mini-batch order) gets its own seed from
`derive_seed(master, *counters)`, where the counters name the consumer, e.g.
`(shuffle, phase, STREAM_CODES)`. The scheme is numpy's SeedSequence spawn
keys, so a given (master, counters) tuple always yields the same 32-bit seed
and distinct tuples give independent streams.
"""
import numpy as np

STREAM_ORDER = 0
STREAM_CODES = 1
STREAM_EXEMPLARS = 2
STREAM_CV = 3
STREAM_NET_INIT = 4
STREAM_NET_TRAIN = 5
STREAM_SPLIT = 6


def derive_seed(master: int, *counters: int) -> int:
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(c) for c in counters))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))
