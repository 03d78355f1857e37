"""Independent scalar-loop re-implementations of every loss formula.

These deliberately avoid the package's tensor math: they pull values out of
tensors one element at a time and accumulate with plain Python floats, so a
mistake in the production code cannot hide in a mirrored oracle.
"""
from __future__ import annotations

import math


def iter_scalars(tensor):
    return [float(v) for v in tensor.detach().double().reshape(-1)]


def mean_loop(values: list[float]) -> float:
    return sum(values) / len(values)


def mae_loop(a, b) -> float:
    va, vb = iter_scalars(a), iter_scalars(b)
    assert len(va) == len(vb)
    return mean_loop([abs(x - y) for x, y in zip(va, vb)])


def lsgan_d_loop(real_scores, fake_scores) -> float:
    real = mean_loop([(v - 1.0) ** 2 for v in iter_scalars(real_scores)])
    fake = mean_loop([v**2 for v in iter_scalars(fake_scores)])
    return real + fake


def lsgan_g_loop(fake_scores) -> float:
    return mean_loop([(v - 1.0) ** 2 for v in iter_scalars(fake_scores)])


def log_d_loop(real_scores, fake_scores) -> float:
    def sigmoid(v: float) -> float:
        return 1.0 / (1.0 + math.exp(-v))

    real = mean_loop([-math.log(sigmoid(v)) for v in iter_scalars(real_scores)])
    fake = mean_loop([-math.log(1.0 - sigmoid(v)) for v in iter_scalars(fake_scores)])
    return real + fake


def log_g_loop(fake_scores) -> float:
    def sigmoid(v: float) -> float:
        return 1.0 / (1.0 + math.exp(-v))

    return mean_loop([-math.log(sigmoid(v)) for v in iter_scalars(fake_scores)])


def sq_dist_loop(probs, target: tuple[float, float]) -> float:
    rows = probs.detach().double().tolist()
    per_sample = [sum((p - t) ** 2 for p, t in zip(row, target)) for row in rows]
    return mean_loop(per_sample)


def cycle_loop(g, f, x_batch, y_batch) -> float:
    return mae_loop(f(g(x_batch)), x_batch) + mae_loop(g(f(y_batch)), y_batch)


def identity_loop(g, f, x_batch, y_batch) -> float:
    return mae_loop(g(y_batch), y_batch) + mae_loop(f(x_batch), x_batch)


def counter_loop(g, f, clf, x_batch, y_batch, target_y, target_x) -> float:
    return sq_dist_loop(clf(g(x_batch)), target_y) + sq_dist_loop(clf(f(y_batch)), target_x)


def plain_cyclegan_generator_total_loop(g, f, d_x, d_y, x_batch, y_batch, lambda_cycle) -> float:
    """Adversarial g-terms for both directions plus weighted cycle term only."""
    adv_g = lsgan_g_loop(d_y(g(x_batch)))
    adv_f = lsgan_g_loop(d_x(f(y_batch)))
    return adv_g + adv_f + lambda_cycle * cycle_loop(g, f, x_batch, y_batch)
