"""Polynomial feature library and coefficient-matrix model representation.

The library is the ordered set of all monomials of total degree <= ``degree``
in the state variables, including the constant and all mixed terms. The
ordering is fixed: ascending total degree, and within each degree the
exponent tuples appear in descending lexicographic order, so for two
variables the sequence is ``1, x1, x2, x1^2, x1 x2, x2^2, x1^3, ...``.
A fitted model is the coefficient matrix Xi such that ``dx/dt = Xi @ Theta(x)``.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_array
from .exceptions import ConfigurationError


def _generate_terms(dim, degree):
    terms = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            exponents = [0] * dim
            for var in combo:
                exponents[var] += 1
            terms.append(tuple(exponents))
    return tuple(terms)


@dataclass(frozen=True)
class FeatureLibrary:
    """Ordered monomial library over ``dim`` state variables.

    Parameters
    ----------
    dim : int
        Number of state variables.
    degree : int, default 3
        Maximum total degree of the monomials.
    """

    dim: int
    degree: int = 3
    terms: tuple = field(init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError(f"dim must be >= 1, got {self.dim}")
        if self.degree < 0:
            raise ConfigurationError(f"degree must be >= 0, got {self.degree}")
        object.__setattr__(self, "terms", _generate_terms(self.dim, self.degree))

    @property
    def n_terms(self):
        return len(self.terms)

    def term_names(self, variables=None):
        """Human-readable monomial names, e.g. ``["1", "x1", "x1^2 x2"]``."""
        if variables is None:
            variables = [f"x{i + 1}" for i in range(self.dim)]
        names = []
        for exponents in self.terms:
            factors = []
            for var, e in zip(variables, exponents):
                if e == 1:
                    factors.append(var)
                elif e > 1:
                    factors.append(f"{var}^{e}")
            names.append(" ".join(factors) if factors else "1")
        return names

    def evaluate(self, states):
        """Evaluate every monomial along a trajectory.

        Parameters
        ----------
        states : ndarray, shape (dim, m)
            State samples, one column per time point.

        Returns
        -------
        theta : ndarray, shape (n_terms, m)
            Library values; row j is the j-th monomial evaluated columnwise.
        """
        x = as_float_array(states, "states")
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != self.dim:
            raise ConfigurationError(
                f"states has {x.shape[0]} rows, library expects {self.dim}"
            )
        theta = np.empty((self.n_terms, x.shape[1]))
        for j, exponents in enumerate(self.terms):
            col = np.ones(x.shape[1])
            for var, e in enumerate(exponents):
                if e:
                    col = col * x[var] ** e
            theta[j] = col
        return theta


def evaluate_library(library, states):
    """Functional alias for :meth:`FeatureLibrary.evaluate`."""
    return library.evaluate(states)


@dataclass(frozen=True)
class CoefficientMatrix:
    """Sparse dynamics model ``dx/dt = values @ Theta(x)``.

    Attributes
    ----------
    library : FeatureLibrary or None
        The monomial basis the columns refer to. May be None for fits on a
        generic design matrix; interpretation helpers (``rhs``,
        ``equations``, serialization) then refuse to run.
    values : ndarray, shape (dim, n_terms)
        One row of coefficients per state equation.
    rank_deficient_rows : tuple of int
        Rows whose unbiased refit hit a rank-deficient support system and
        received the smallest-norm solution.
    """

    library: FeatureLibrary | None
    values: np.ndarray
    rank_deficient_rows: tuple = ()

    def __post_init__(self):
        vals = as_float_array(self.values, "values", ndim=2)
        if self.library is not None and vals.shape != (
            self.library.dim,
            self.library.n_terms,
        ):
            raise ConfigurationError(
                f"values shape {vals.shape} does not match library "
                f"({self.library.dim}, {self.library.n_terms})"
            )
        object.__setattr__(self, "values", vals)

    def _require_library(self):
        if self.library is None:
            raise ConfigurationError("this CoefficientMatrix carries no feature library")
        return self.library

    def support(self, tol=1e-10):
        """Boolean nonzero pattern: entries with magnitude above ``tol``."""
        return np.abs(self.values) > tol

    def rhs(self, state):
        """Evaluate the model vector field at one or more states."""
        return self.values @ self._require_library().evaluate(state)

    def equations(self, variables=None, precision=6):
        """Render one equation string per row, e.g. ``"x1' = -0.1 x1 + 2 x2"``."""
        lib = self._require_library()
        names = lib.term_names(variables)
        if variables is None:
            variables = [f"x{i + 1}" for i in range(lib.dim)]
        lines = []
        for row, var in zip(self.values, variables):
            parts = []
            for coef, name in zip(row, names):
                if coef == 0.0:
                    continue
                mag = f"{abs(coef):.{precision}g}"
                term = mag if name == "1" else f"{mag} {name}"
                if not parts:
                    parts.append(term if coef > 0 else f"-{term}")
                else:
                    parts.append(f"{'+' if coef > 0 else '-'} {term}")
            lines.append(f"{var}' = " + (" ".join(parts) if parts else "0"))
        return lines

    def to_dict(self):
        lib = self._require_library()
        return {
            "dim": lib.dim,
            "degree": lib.degree,
            "terms": [list(t) for t in lib.terms],
            "values": self.values.tolist(),
            "rank_deficient_rows": list(self.rank_deficient_rows),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, payload):
        library = FeatureLibrary(int(payload["dim"]), int(payload["degree"]))
        terms = tuple(tuple(int(e) for e in t) for t in payload["terms"])
        if terms != library.terms:
            raise ConfigurationError("stored multi-indices do not match the canonical ordering")
        return cls(
            library=library,
            values=np.asarray(payload["values"], dtype=float),
            rank_deficient_rows=tuple(payload.get("rank_deficient_rows", ())),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
