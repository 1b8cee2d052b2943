"""Pauli-string algebra for the spin-chain toolbox.

Conventions used across the package:

* Sites are numbered 1..L and site 1 is the most significant bit of a
  basis-state index, so ``|s_1 s_2 ... s_L>`` has index ``sum_m s_m 2^(L-m)``.
* Bit value 1 means the Rydberg state ``|up>``, bit 0 means ``|down>``.
  Basis vectors are therefore ordered (down, up) on each site, which makes

      Z = [[-1, 0], [0, +1]],   X = [[0, 1], [1, 0]],   Y = [[0, i], [-i, 0]]

  i.e. ``<Z> = -1`` on ``|down>`` and the number operator ``n = (Z + 1)/2``
  counts ``|up>``. The cyclic algebra X Y = i Z holds unchanged.
* A Pauli string is stored as a letter word over {I, X, Y, Z} plus an integer
  power of i, so products are exact integer arithmetic.

Hamiltonian builders are unit agnostic: coefficients pass through unchanged.
The configuration layer converts plain MHz to angular rad/us (factor 2*pi)
before anything is handed to the time-evolution engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "LABELS",
    "PAULI_MATRICES",
    "ROTATION_MATRICES",
    "ROTATION_ORDER",
    "PauliString",
    "PauliStringSum",
    "pauli_mul",
    "conjugate_by_labels",
    "square_observable",
    "build_ssh",
    "build_staggered_xy",
    "hamiltonian_to_json",
    "hamiltonian_from_json",
    "TWO_PI",
]

TWO_PI = 2.0 * np.pi

# Local rotations drawn in the measurement protocol, keyed by label:
#   1 -> exp(-i pi/4 X)   (z readout after it measures the +y axis)
#   2 -> exp(-i pi/4 Y)   (measures the -x axis)
#   3 -> identity         (measures +z)
LABELS = (1, 2, 3)
ROTATION_ORDER = "1:exp(-i pi/4 X), 2:exp(-i pi/4 Y), 3:identity"

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_Y = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
_Z = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)

PAULI_MATRICES: dict[str, np.ndarray] = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}

_SQ2 = 1.0 / np.sqrt(2.0)
ROTATION_MATRICES: dict[int, np.ndarray] = {
    1: _SQ2 * (_I2 - 1.0j * _X),
    2: _SQ2 * (_I2 - 1.0j * _Y),
    3: _I2.copy(),
}

_LETTERS = "IXYZ"
_CODE = {c: k for k, c in enumerate(_LETTERS)}

# Single-site products: _MUL_LETTER[a][b] and i-power _MUL_PHASE[a][b] for
# sigma_a sigma_b = i^p sigma_c, with codes I=0, X=1, Y=2, Z=3.
_MUL_LETTER = np.array(
    [
        [0, 1, 2, 3],
        [1, 0, 3, 2],
        [2, 3, 0, 1],
        [3, 2, 1, 0],
    ],
    dtype=np.int8,
)
_MUL_PHASE = np.array(
    [
        [0, 0, 0, 0],
        [0, 0, 1, 3],
        [0, 3, 0, 1],
        [0, 1, 3, 0],
    ],
    dtype=np.int8,
)

# Heisenberg maps R_label sigma R_label^dag -> (letter, sign), derived from
# the 2x2 matrices above and frozen here as integer tables. Label 1 rotates
# the Bloch sphere by +pi/2 about x (Y -> Z, Z -> -Y); label 2 by +pi/2
# about y (Z -> X, X -> -Z); label 3 is the identity.
_CONJ_LETTER = {
    1: np.array([0, 1, 3, 2], dtype=np.int8),
    2: np.array([0, 3, 2, 1], dtype=np.int8),
    3: np.array([0, 1, 2, 3], dtype=np.int8),
}
_CONJ_SIGN = {
    1: np.array([1, 1, 1, -1], dtype=np.int8),
    2: np.array([1, -1, 1, 1], dtype=np.int8),
    3: np.array([1, 1, 1, 1], dtype=np.int8),
}
# Inverse maps, for undoing a conjugation: R^dag sigma R.
_CONJ_LETTER_INV = {
    1: np.array([0, 1, 3, 2], dtype=np.int8),
    2: np.array([0, 3, 2, 1], dtype=np.int8),
    3: np.array([0, 1, 2, 3], dtype=np.int8),
}
_CONJ_SIGN_INV = {
    1: np.array([1, 1, -1, 1], dtype=np.int8),
    2: np.array([1, 1, 1, -1], dtype=np.int8),
    3: np.array([1, 1, 1, 1], dtype=np.int8),
}

_PHASES = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


def _check_letters(letters: str) -> None:
    bad = set(letters) - set(_LETTERS)
    if bad:
        raise ValueError(f"invalid Pauli letters {sorted(bad)}")


@dataclass(frozen=True)
class PauliString:
    """A tensor product of single-site Paulis times an integer power of i.

    Attributes:
        letters: word over {I, X, Y, Z}; position m-1 acts on site m.
        phase_pow: k in i^k, kept mod 4.
    """

    letters: str
    phase_pow: int = 0

    def __post_init__(self) -> None:
        _check_letters(self.letters)
        object.__setattr__(self, "phase_pow", self.phase_pow % 4)

    @property
    def num_sites(self) -> int:
        return len(self.letters)

    @property
    def phase(self) -> complex:
        return _PHASES[self.phase_pow]

    @property
    def support(self) -> tuple[int, ...]:
        """1-based sites carrying a non-identity letter."""
        return tuple(m + 1 for m, c in enumerate(self.letters) if c != "I")

    @property
    def weight(self) -> int:
        return sum(1 for c in self.letters if c != "I")

    def is_diagonal(self) -> bool:
        """True when the string contains only I and Z letters."""
        return all(c in "IZ" for c in self.letters)

    @classmethod
    def identity(cls, num_sites: int) -> "PauliString":
        return cls("I" * num_sites)

    @classmethod
    def from_ops(cls, ops: Mapping[int, str], num_sites: int) -> "PauliString":
        """Build from a {site: letter} map with 1-based sites."""
        word = ["I"] * num_sites
        for site, letter in ops.items():
            if not 1 <= site <= num_sites:
                raise ValueError(f"site {site} outside 1..{num_sites}")
            if word[site - 1] != "I":
                raise ValueError(f"duplicate letter on site {site}")
            word[site - 1] = letter
        return cls("".join(word))

    def to_matrix(self) -> np.ndarray:
        """Dense 2^L x 2^L matrix, site 1 as the most significant factor."""
        out = np.array([[self.phase]], dtype=complex)
        for c in self.letters:
            out = np.kron(out, PAULI_MATRICES[c])
        return out

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        pref = {0: "+", 1: "+i", 2: "-", 3: "-i"}[self.phase_pow]
        return f"{pref}{self.letters}"


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    """Product of two Pauli strings, exact in integer phase arithmetic."""
    if a.num_sites != b.num_sites:
        raise ValueError("length mismatch")
    ca = np.frombuffer(a.letters.encode(), dtype=np.uint8)
    cb = np.frombuffer(b.letters.encode(), dtype=np.uint8)
    ia = _ENC[ca]
    ib = _ENC[cb]
    letters = _DEC[_MUL_LETTER[ia, ib]].tobytes().decode()
    phase = (a.phase_pow + b.phase_pow + int(_MUL_PHASE[ia, ib].sum())) % 4
    return PauliString(letters, phase)


# ASCII encode/decode tables so letter words round-trip through uint8 arrays.
_ENC = np.zeros(128, dtype=np.int8)
for _c, _k in _CODE.items():
    _ENC[ord(_c)] = _k
_DEC = np.frombuffer(_LETTERS.encode(), dtype=np.uint8)


def conjugate_by_labels(
    p: PauliString, labels: Iterable[int], inverse: bool = False
) -> PauliString:
    """Conjugate ``p`` by the product of labelled local rotations.

    Returns U p U^dag for U = prod_m R_{labels[m]} (or U^dag p U when
    ``inverse`` is set). The result is again a single Pauli string whose
    phase is +-1 times the input phase, because each rotation permutes
    {X, Y, Z} up to sign.
    """
    labels = list(labels)
    if len(labels) != p.num_sites:
        raise ValueError("one label per site required")
    letter_map = _CONJ_LETTER_INV if inverse else _CONJ_LETTER
    sign_map = _CONJ_SIGN_INV if inverse else _CONJ_SIGN
    word = []
    sign = 1
    for c, lab in zip(p.letters, labels):
        if lab not in (1, 2, 3):
            raise ValueError(f"invalid rotation label {lab}")
        k = _CODE[c]
        word.append(_LETTERS[letter_map[lab][k]])
        sign *= int(sign_map[lab][k])
    phase = (p.phase_pow + (2 if sign < 0 else 0)) % 4
    return PauliString("".join(word), phase)


class PauliStringSum:
    """A Hermitian-friendly linear combination of Pauli strings.

    Terms are kept canonical: the i^k phase of each string is folded into
    its complex coefficient, coefficients of equal words are merged, and
    terms below 1e-13 in magnitude are dropped. For a Hermitian sum all
    canonical coefficients are real.
    """

    __slots__ = ("num_sites", "_terms")

    def __init__(self, num_sites: int, terms: Mapping[str, complex] | None = None):
        self.num_sites = int(num_sites)
        self._terms: dict[str, complex] = {}
        if terms:
            for word, coeff in terms.items():
                self.add_term(coeff, PauliString(word))

    def add_term(self, coeff: complex, string: PauliString) -> None:
        if string.num_sites != self.num_sites:
            raise ValueError("length mismatch")
        c = complex(coeff) * string.phase
        word = string.letters
        new = self._terms.get(word, 0.0 + 0.0j) + c
        if abs(new) < 1e-13:
            self._terms.pop(word, None)
        else:
            self._terms[word] = new

    def items(self) -> list[tuple[str, complex]]:
        """Canonical (word, coefficient) pairs in sorted word order."""
        return sorted(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def coefficient(self, word: str) -> complex:
        return self._terms.get(word, 0.0 + 0.0j)

    @property
    def identity_coefficient(self) -> complex:
        return self.coefficient("I" * self.num_sites)

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def copy(self) -> "PauliStringSum":
        out = PauliStringSum(self.num_sites)
        out._terms = dict(self._terms)
        return out

    def __add__(self, other: "PauliStringSum") -> "PauliStringSum":
        if other.num_sites != self.num_sites:
            raise ValueError("length mismatch")
        out = self.copy()
        for word, c in other._terms.items():
            out.add_term(c, PauliString(word))
        return out

    def __mul__(self, scalar: complex) -> "PauliStringSum":
        out = PauliStringSum(self.num_sites)
        for word, c in self._terms.items():
            out.add_term(c * scalar, PauliString(word))
        return out

    __rmul__ = __mul__

    def __matmul__(self, other: "PauliStringSum") -> "PauliStringSum":
        """Operator product, expanded term by term and re-canonicalized."""
        if other.num_sites != self.num_sites:
            raise ValueError("length mismatch")
        out = PauliStringSum(self.num_sites)
        for wa, ca in self._terms.items():
            pa = PauliString(wa)
            for wb, cb in other._terms.items():
                prod = pauli_mul(pa, PauliString(wb))
                out.add_term(ca * cb, prod)
        return out

    def to_matrix(self) -> np.ndarray:
        dim = 2**self.num_sites
        out = np.zeros((dim, dim), dtype=complex)
        for word, c in self._terms.items():
            out += c * PauliString(word).to_matrix()
        return out

    def to_sparse(self):
        """CSR matrix; each string contributes one generalized permutation."""
        from scipy import sparse

        dim = 2**self.num_sites
        out = sparse.csr_matrix((dim, dim), dtype=complex)
        for word, c in self._terms.items():
            term = sparse.identity(1, dtype=complex, format="csr")
            for letter in word:
                term = sparse.kron(term, sparse.csr_matrix(PAULI_MATRICES[letter]))
            out = out + c * term
        return out.tocsr()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        parts = [f"({c:.6g})*{w}" for w, c in self.items()]
        return " + ".join(parts) if parts else "0"


def square_observable(obs: PauliStringSum) -> PauliStringSum:
    """Symbolic square of an observable, merged to canonical form.

    Needed for variance estimation: the square is computed once as a Pauli
    sum so the same measurement records can be reused for <O> and <O^2>.
    """
    return obs @ obs


# ---------------------------------------------------------------------------
# Chain Hamiltonians
# ---------------------------------------------------------------------------


def _add_hopping(out: PauliStringSum, coeff: float, a: int, b: int) -> None:
    # -J (s+_a s-_b + h.c.) expands to -(J/2)(X_a X_b + Y_a Y_b)
    out.add_term(-0.5 * coeff, PauliString.from_ops({a: "X", b: "X"}, out.num_sites))
    out.add_term(-0.5 * coeff, PauliString.from_ops({a: "Y", b: "Y"}, out.num_sites))


def build_ssh(
    L: int,
    j_e: float,
    j_o: float,
    j_nnn: float = 0.0,
    mu_edge: float = 0.0,
) -> PauliStringSum:
    """Dimerized XY chain with beyond-nearest-neighbour hopping.

    Bond (x, x+1) carries the flip-flop exchange -J (s+ s- + h.c.) with
    J = j_e on even x and J = j_o on odd x (1-based sites), plus the same
    kind of term with j_nnn on every (x, x+3) pair, plus a local potential
    -mu_edge * n_1 that pins the edge mode and breaks the ground-state
    degeneracy. Coefficients are passed through in whatever frequency unit
    the caller uses.
    """
    if L < 2:
        raise ValueError("need at least two sites")
    out = PauliStringSum(L)
    for x in range(1, L):
        j = j_e if x % 2 == 0 else j_o
        if j != 0.0:
            _add_hopping(out, j, x, x + 1)
    if j_nnn != 0.0:
        for x in range(1, L - 2):
            _add_hopping(out, j_nnn, x, x + 3)
    if mu_edge != 0.0:
        # -mu * n_1 with n = (Z + 1)/2
        out.add_term(-0.5 * mu_edge, PauliString.from_ops({1: "Z"}, L))
        out.add_term(-0.5 * mu_edge, PauliString.identity(L))
    return out


def build_staggered_xy(L: int, j: float) -> PauliStringSum:
    """Uniform-magnitude staggered chain: J = +j on even bonds, -j on odd."""
    return build_ssh(L, j_e=j, j_o=-j)


# ---------------------------------------------------------------------------
# JSON round trip for the chain parameters
# ---------------------------------------------------------------------------

_HAM_KEYS = {"L", "J_e", "J_o", "J_nnn", "mu_edge", "angular"}


def hamiltonian_to_json(
    L: int,
    j_e: float,
    j_o: float,
    j_nnn: float = 0.0,
    mu_edge: float = 0.0,
    angular: bool = True,
) -> str:
    """Serialize chain parameters. ``angular`` marks rad/us coefficients."""
    return json.dumps(
        {
            "L": L,
            "J_e": j_e,
            "J_o": j_o,
            "J_nnn": j_nnn,
            "mu_edge": mu_edge,
            "angular": angular,
        },
        sort_keys=True,
    )


def hamiltonian_from_json(text: str) -> PauliStringSum:
    """Build the chain from a parameter JSON, converting MHz when needed.

    With ``angular`` false (the default for config files) every coefficient
    is interpreted as plain MHz and multiplied by 2*pi, so the returned sum
    is always in angular rad/us, ready for time evolution.
    """
    data = json.loads(text)
    unknown = set(data) - _HAM_KEYS
    if unknown:
        raise ValueError(f"unknown Hamiltonian keys {sorted(unknown)}")
    if "L" not in data:
        raise ValueError("missing L")
    scale = 1.0 if data.get("angular", False) else TWO_PI
    return build_ssh(
        int(data["L"]),
        scale * float(data.get("J_e", 0.0)),
        scale * float(data.get("J_o", 0.0)),
        scale * float(data.get("J_nnn", 0.0)),
        scale * float(data.get("mu_edge", 0.0)),
    )
