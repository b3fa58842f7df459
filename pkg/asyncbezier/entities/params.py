"""
*Vector arithmetic for points and tangents in parameter space.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

All models handled by the asyncbezier package live in a flat, Euclidean
parameter space. Points (global models, client endpoints, control points
of curves) and tangents (client displacements, global drift) are hence
represented alike: as one-dimensional :class:`numpy.ndarray` objects of
dtype ``float64``. Throughout the package, such an array is referred to
as a *parameter vector*.

Rather than wrapping these arrays in a class of their own, the module
provides a small set of functions operating on them. This keeps the
arrays directly usable with NumPy and avoids copying.


Key aspects
===========

* **Determinism.** Inner products are summed sequentially in index order
  (using a cumulative sum) rather than with the pairwise summation NumPy
  uses otherwise. Hence, ``inner(a, b) == inner(b, a)`` holds bitwise,
  and results do not depend on the BLAS library installed.

* **Degenerate directions.** Projecting onto a zero vector is undefined
  and raises :class:`DegenerateDirectionError
  <asyncbezier.exceptions.DegenerateDirectionError>`. The cosine of an
  angle involving a zero vector, however, is defined to be 0, *i.e.*
  "no conflict".

* **Finiteness.** :func:`check_finite` is the single place where
  non-finite parameters are detected and turned into a
  :class:`DivergenceError <asyncbezier.exceptions.DivergenceError>`.


Usage
=====

.. code-block::

    from asyncbezier.entities import params

    a = params.as_param_vector([1.0, 1.0])
    b = params.as_param_vector([0.0, 2.0])
    params.inner(a, b)          # 2.0
    params.project_onto(a, b)   # array([0., 1.])
    params.cosine(a, b)         # 0.7071...


Module documentation
====================

"""

import logging

import numpy as np

from asyncbezier.exceptions import (
    DegenerateDirectionError,
    DimensionError,
    DivergenceError,
)

logger = logging.getLogger(__name__)


def as_param_vector(values=None):
    """
    Convert values into a parameter vector.

    Parameters
    ----------
    values : array_like
        Values of the parameter vector.

    Returns
    -------
    vector : :class:`numpy.ndarray`
        One-dimensional, contiguous array of dtype ``float64``.

        If ``values`` is already such an array, a copy is returned.

    Raises
    ------
    ValueError
        Raised if no values or values with more than one dimension are
        given.

    DivergenceError
        Raised if any value is not finite.

    """
    if values is None:
        raise ValueError("Need values to create a parameter vector.")
    vector = np.array(values, dtype=np.float64, copy=True)
    if vector.ndim != 1 or vector.size == 0:
        raise ValueError("Parameter vectors need to be one-dimensional.")
    check_finite(vector)
    return vector


def zeros(dim=1):
    """
    Create a parameter vector of zeros.

    Parameters
    ----------
    dim : :class:`int`
        Dimension of the vector. Needs to be positive.

    Returns
    -------
    vector : :class:`numpy.ndarray`
        Vector of zeros.

    """
    if dim < 1:
        raise ValueError("Dimension needs to be positive.")
    return np.zeros(dim, dtype=np.float64)


def check_dimensions(*vectors):
    """
    Ensure all vectors share the same dimension.

    Raises
    ------
    DimensionError
        Raised if the vectors differ in their dimensions.

    """
    dims = {np.shape(vector) for vector in vectors}
    if len(dims) > 1:
        raise DimensionError(f"Dimension mismatch: {sorted(dims)}")


def check_finite(vector=None, context=""):
    """
    Ensure all entries of a vector are finite.

    Parameters
    ----------
    vector : :class:`numpy.ndarray`
        Vector to check.

    context : :class:`str`
        Short description used in the error message.

    Raises
    ------
    DivergenceError
        Raised if any entry is NaN or infinite.

    """
    if not np.all(np.isfinite(vector)):
        message = "Non-finite parameters"
        if context:
            message = f"{message} ({context})"
        raise DivergenceError(message)


def inner(a=None, b=None):
    """
    Euclidean inner product of two parameter vectors.

    Summation is strictly sequential in index order, making the result
    reproducible bitwise and exactly symmetric.

    Parameters
    ----------
    a : :class:`numpy.ndarray`
        First vector

    b : :class:`numpy.ndarray`
        Second vector

    Returns
    -------
    product : :class:`float`
        Sum of the elementwise products.

    Raises
    ------
    DimensionError
        Raised if the vectors differ in their dimensions.

    """
    check_dimensions(a, b)
    return float(np.cumsum(np.multiply(a, b))[-1])


def norm(a=None):
    """
    Euclidean norm of a parameter vector.

    Parameters
    ----------
    a : :class:`numpy.ndarray`
        Vector

    Returns
    -------
    norm : :class:`float`
        Square root of :func:`inner` of the vector with itself.

    """
    return float(np.sqrt(inner(a, a)))


def project_onto(a=None, b=None):
    """
    Orthogonal projection of ``a`` onto the direction of ``b``.

    The projection is :math:`\\langle a,b\\rangle / \\langle b,b\\rangle
    \\cdot b`, hence parallel to ``b``, with ``a`` minus the projection
    being orthogonal to ``b``.

    Parameters
    ----------
    a : :class:`numpy.ndarray`
        Vector to project

    b : :class:`numpy.ndarray`
        Direction to project onto

    Returns
    -------
    projection : :class:`numpy.ndarray`
        Component of ``a`` along ``b``.

    Raises
    ------
    DimensionError
        Raised if the vectors differ in their dimensions.

    DegenerateDirectionError
        Raised if ``b`` has zero norm.

    """
    b_squared = inner(b, b)
    if b_squared == 0.0:
        raise DegenerateDirectionError("Cannot project onto zero vector.")
    return (inner(a, b) / b_squared) * np.asarray(b, dtype=np.float64)


def cosine(a=None, b=None):
    """
    Cosine of the angle between two parameter vectors.

    If either vector has zero norm, the cosine is defined to be 0. A zero
    update or a zero drift cannot conflict with anything.

    Parameters
    ----------
    a : :class:`numpy.ndarray`
        First vector

    b : :class:`numpy.ndarray`
        Second vector

    Returns
    -------
    cosine : :class:`float`
        Cosine clamped to the interval [-1, 1].

    """
    check_dimensions(a, b)
    norm_a = norm(a)
    norm_b = norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, inner(a, b) / (norm_a * norm_b))))
