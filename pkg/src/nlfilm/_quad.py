"""Gauss-Legendre panel quadrature helpers used across the package."""

import functools

import numpy as np


@functools.lru_cache(maxsize=32)
def gauss_legendre(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def panel_rule(edges, order):
    """Composite Gauss-Legendre rule over consecutive panels.

    edges : (P+1,) increasing panel boundaries
    returns nodes, weights of shape (P*order,)
    """
    edges = np.asarray(edges, dtype=float)
    gn, gw = gauss_legendre(order)
    a = edges[:-1][:, None]
    b = edges[1:][:, None]
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * gn[None, :]
    weights = half * gw[None, :]
    return nodes.ravel(), weights.ravel()


def log_edges(a, b, panels):
    """Geometrically spaced panel edges on [a, b], 0 < a < b."""
    return np.geomspace(a, b, panels + 1)


def lin_edges(a, b, panels):
    return np.linspace(a, b, panels + 1)
