"""Bit-exact binary container for keys, ciphertexts and states.

Layout: ``RVLC`` | version u32 | params block | records.  The params block
is n, m, q (u64), sigma, alpha, beta (f64), p, ell, N, L (u64), all little
endian.  Each record is a 4-byte tag, a u64 payload length, then the
payload: a sequence of typed items (``M`` u64 matrix, ``I`` i64 matrix,
``F`` f64 array), every matrix row-major with u64 row/column counts.
"""
from __future__ import annotations

import io
import struct

import numpy as np

from .coset import CosetState, PureState
from .dual_regev import DrDecKey, DrPublicKey, DrMasterSecret, DualRegevCiphertext
from .gsw import GswCiphertext
from .lattice import ParameterError, SchemeParams, TrapdoorPair
from .prf import PrfKey, QuantumPrfKey, ShiftHidingPK, ShiftHidingSK

MAGIC = b"RVLC"
VERSION = 1
_PARAMS = struct.Struct("<3Q3d4Q")


class FormatError(ValueError):
    """Malformed or mismatched container."""


# ------------------------------------------------------------ items

class Payload:
    def __init__(self, data: bytes = b""):
        self.buf = io.BytesIO(data)

    def mat(self, M, signed: bool = False) -> "Payload":
        M = np.atleast_2d(np.asarray(M, dtype=np.int64))
        self.buf.write(b"I" if signed else b"M")
        self.buf.write(struct.pack("<2Q", *M.shape))
        self.buf.write(np.ascontiguousarray(M, dtype="<i8" if signed else "<u8").tobytes())
        return self

    def floats(self, v) -> "Payload":
        v = np.asarray(v, dtype="<f8").reshape(-1)
        self.buf.write(b"F" + struct.pack("<Q", v.size) + v.tobytes())
        return self

    def bytes(self) -> bytes:
        return self.buf.getvalue()

    # readers
    def _kind(self, want: bytes):
        k = self.buf.read(1)
        if k != want:
            raise FormatError(f"expected item {want!r}, found {k!r}")

    def read_mat(self, signed: bool = False) -> np.ndarray:
        self._kind(b"I" if signed else b"M")
        r, c = struct.unpack("<2Q", self._take(16))
        raw = self._take(8 * r * c)
        return np.frombuffer(raw, dtype="<i8" if signed else "<u8").astype(np.int64).reshape(r, c)

    def read_floats(self) -> np.ndarray:
        self._kind(b"F")
        (k,) = struct.unpack("<Q", self._take(8))
        return np.frombuffer(self._take(8 * k), dtype="<f8").astype(np.float64)

    def _take(self, k: int) -> bytes:
        b = self.buf.read(k)
        if len(b) != k:
            raise FormatError("truncated payload")
        return b


# ------------------------------------------------------------ container

def pack_params(p: SchemeParams) -> bytes:
    return _PARAMS.pack(p.n, p.m, p.q, p.sigma, p.alpha, p.beta, p.p, p.ell, p.N_gadget, p.L)


def unpack_params(b: bytes) -> SchemeParams:
    n, m, q, sigma, alpha, beta, p, ell, N, L = _PARAMS.unpack(b)
    params = SchemeParams(n=n, m=m, q=q, sigma=sigma, alpha=alpha, beta=beta, p=p, L=L)
    if params.ell != ell or params.N_gadget != N:
        raise FormatError("derived sizes in the params block are inconsistent")
    return params


def dumps(params: SchemeParams, records) -> bytes:
    out = [MAGIC, struct.pack("<I", VERSION), pack_params(params)]
    for tag, payload in records:
        tag = tag.encode() if isinstance(tag, str) else tag
        if len(tag) != 4:
            raise FormatError(f"tag {tag!r} must be 4 bytes")
        out += [tag, struct.pack("<Q", len(payload)), payload]
    return b"".join(out)


def loads(data: bytes):
    """(params, [(tag, payload bytes), ...])."""
    if data[:4] != MAGIC:
        raise FormatError("missing RVLC magic")
    (ver,) = struct.unpack("<I", data[4:8])
    if ver != VERSION:
        raise FormatError(f"unsupported version {ver}")
    off = 8 + _PARAMS.size
    params = unpack_params(data[8:off])
    recs = []
    while off < len(data):
        if off + 12 > len(data):
            raise FormatError("truncated record header")
        tag = data[off:off + 4].decode("ascii")
        (k,) = struct.unpack("<Q", data[off + 4:off + 12])
        payload = data[off + 12:off + 12 + k]
        if len(payload) != k:
            raise FormatError("truncated record")
        recs.append((tag, payload))
        off += 12 + k
    return params, recs


def write_file(path, params, objects) -> None:
    with open(path, "wb") as f:
        f.write(dumps(params, [encode(o, params) for o in objects]))


def read_file(path):
    """(params, [decoded objects])."""
    with open(path, "rb") as f:
        params, recs = loads(f.read())
    return params, [decode(t, pl, params) for t, pl in recs]


# ------------------------------------------------------------ objects

_KINDS = {"gadget": 0, "enumeration": 1}


def encode(obj, params: SchemeParams) -> tuple[str, bytes]:
    P = Payload()
    if isinstance(obj, DualRegevCiphertext):
        return "DRCT", P.mat(obj.c0[None, :]).mat([[obj.c1]]).bytes()
    if isinstance(obj, GswCiphertext):
        return "GSWC", P.mat(obj.C).mat([[obj.level]]).bytes()
    if isinstance(obj, DrPublicKey):
        return "DRPK", P.mat(obj.A).mat(obj.y[None, :]).bytes()
    if isinstance(obj, DrMasterSecret):
        t = obj.trapdoor
        R = np.zeros((0, 0), dtype=np.int64) if t.R is None else t.R
        return "TRAP", P.mat(t.A).mat([[_KINDS[t.kind]]]).mat(R, signed=True).bytes()
    if isinstance(obj, CosetState):
        amps = np.stack([obj.amps.real, obj.amps.imag], axis=1)
        P.mat(obj.vecs).floats(amps).floats([obj.sigma, obj.radius])
        return "CSTA", P.mat(obj.A).mat(obj.y[None, :]).bytes()
    if isinstance(obj, PureState):
        amps = np.stack([obj.amps.real, obj.amps.imag], axis=1)
        return "PSTA", P.mat(obj.vecs).floats(amps).bytes()
    if isinstance(obj, DrDecKey):
        if obj.quantum:
            return encode(obj.state, params)
        return "DRSK", P.mat(obj.x0[None, :], signed=True).bytes()
    if isinstance(obj, ShiftHidingPK):
        n, m = params.n, params.m
        return "SHPK", P.mat(obj.A).mat(obj.table.reshape(-1, m)).bytes()
    if isinstance(obj, ShiftHidingSK):
        n, m = params.n, params.m
        return "SHSK", P.mat(obj.S.reshape(-1, n)).mat(obj.E.reshape(-1, m)).bytes()
    if isinstance(obj, np.ndarray):
        return "VECT", P.mat(np.atleast_2d(obj)).bytes()
    raise FormatError(f"cannot serialize {type(obj).__name__}")


def decode(tag: str, payload: bytes, params: SchemeParams):
    P = Payload(payload)
    q, n, m, ell = params.q, params.n, params.m, params.ell
    if tag == "DRCT":
        c0 = P.read_mat()[0]
        return DualRegevCiphertext(c0, int(P.read_mat()[0, 0]))
    if tag == "GSWC":
        C = P.read_mat()
        if C.shape != (m + 1, params.N_gadget):
            raise FormatError("GSW ciphertext shape does not match params")
        return GswCiphertext(C, int(P.read_mat()[0, 0]))
    if tag == "DRPK":
        return DrPublicKey(P.read_mat(), P.read_mat()[0])
    if tag == "TRAP":
        A = P.read_mat()
        kind = {v: k for k, v in _KINDS.items()}[int(P.read_mat()[0, 0])]
        R = P.read_mat(signed=True)
        return DrMasterSecret(TrapdoorPair(A, q, kind, R if R.size else None))
    if tag in ("CSTA", "PSTA"):
        vecs = P.read_mat()
        amps = P.read_floats().reshape(-1, 2)
        amps = amps[:, 0] + 1j * amps[:, 1]
        if tag == "PSTA":
            return PureState(q, m, vecs.reshape(-1, m), amps)
        sigma, radius = P.read_floats()
        A = P.read_mat()
        y = P.read_mat()[0]
        return CosetState(q, m, vecs.reshape(-1, m), amps, A=A, y=y, sigma=float(sigma), radius=float(radius))
    if tag == "DRSK":
        return DrDecKey(x0=np.mod(P.read_mat(signed=True)[0], q))
    if tag == "SHPK":
        A = P.read_mat()
        return ShiftHidingPK(A, P.read_mat().reshape(2, ell, n, m))
    if tag == "SHSK":
        S = P.read_mat().reshape(2, ell, n, n)
        return ShiftHidingSK(S, P.read_mat().reshape(2, ell, n, m))
    if tag == "VECT":
        return P.read_mat()[0]
    raise FormatError(f"unknown record tag {tag!r}")


# ------------------------------------------------------------ bundles

def prf_key_objects(k: PrfKey):
    return [k.pk, k.sk, k.y]


def prf_key_from(objs) -> PrfKey:
    pk, sk, y = objs
    return PrfKey(pk, sk, y)


def qprf_key_objects(qk: QuantumPrfKey):
    return [qk.pk, qk.y, qk.state if qk.quantum else DrDecKey(x0=qk.x0)]


def qprf_key_from(objs) -> QuantumPrfKey:
    pk, y, key = objs
    if isinstance(key, DrDecKey):
        return QuantumPrfKey(pk, None, y, key.x0)
    return QuantumPrfKey(pk, key, y)
