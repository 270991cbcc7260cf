"""``revoca`` command line.  Exit codes: 0 ok, 1 failed check, 2 bad configuration."""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import coset, dual_regev as dr, gsw, prf as rprf, reductions as red
from .harness import ConfigError, ExperimentReport, binomial_summary, load_config, save_report
from .lattice import ParameterError, ResourceError, gen_trap
from .rng import stream
from .serialize import (
    FormatError, prf_key_from, prf_key_objects, qprf_key_from, qprf_key_objects, read_file,
    write_file,
)


class CheckFailed(RuntimeError):
    """A verification performed by a command did not pass."""


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--dump-state", action="store_true")
    p.add_argument("--format", choices=("text", "json-lines"), default="text")
    p.add_argument("--report", help="write the report here instead of stdout")
    p.add_argument("--no-clock", action="store_true", help="omit the wall-clock line")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="revoca", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def cmd(name, **kw):
        p = sub.add_parser(name, **kw)
        _common(p)
        return p

    p = cmd("keygen", help="Dual-Regev key triple")
    p.add_argument("--out", required=True, help="directory for pk/sk/msk files")
    p.add_argument("--mode", choices=("quantum", "classical"), default="quantum")
    p = cmd("enc", help="Dual-Regev encryption of a bit string")
    p.add_argument("--pk", required=True)
    p.add_argument("--bits", required=True, help="e.g. 1011")
    p.add_argument("--out", required=True)
    p = cmd("dec", help="Dual-Regev decryption")
    p.add_argument("--sk", required=True)
    p.add_argument("--ct", required=True)
    p = cmd("revoke", help="revocation check of a returned key")
    p.add_argument("--pk", required=True)
    p.add_argument("--msk", required=True)
    p.add_argument("--state", required=True)

    p = cmd("fhe-enc", help="DualGSW encryption of input bits")
    p.add_argument("--pk", required=True)
    p.add_argument("--bits", required=True)
    p.add_argument("--out", required=True)
    p = cmd("fhe-eval", help="evaluate a NAND netlist on ciphertexts")
    p.add_argument("--netlist", required=True)
    p.add_argument("--ct", required=True, help="file of input ciphertexts in netlist input order")
    p.add_argument("--out", required=True)
    p = cmd("fhe-dec", help="DualGSW decryption")
    p.add_argument("--sk", required=True)
    p.add_argument("--ct", required=True)

    p = cmd("prf-gen", help="revocable PRF key, quantum key and master secret")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("quantum", "classical"), default="quantum")
    p = cmd("prf-eval", help="evaluate the PRF on a hex input")
    p.add_argument("--key", required=True, help="prf.rvlc (classical) or qkey.rvlc (quantum)")
    p.add_argument("--input", required=True)
    p = cmd("prf-revoke", help="revocation check of a returned PRF key")
    p.add_argument("--qkey", required=True)
    p.add_argument("--msk", required=True)
    p.add_argument("--state", required=True)

    p = cmd("experiment", help="security-game runner")
    p.add_argument("game", choices=("pke", "prf"))
    p.add_argument("--adversary", required=True)
    p.add_argument("--mu", type=int, default=1, help="PRF challenge count")
    p.add_argument("--plaintext-before-revoke", action="store_true")
    p.add_argument("--records", action="store_true", help="emit per-trial records")
    cmd("lemmas", help="run every lemma check over a sweep")
    cmd("sis-demo", help="SIS pipeline with a keep-one-preimage adversary")
    return ap


# ------------------------------------------------------------ helpers

def _bits(s: str) -> list[int]:
    if not s or any(c not in "01" for c in s):
        raise ConfigError(f"bit string expected, got {s!r}")
    return [int(c) for c in s]


def _hex_input(s: str, ell: int) -> np.ndarray:
    want = -(-ell // 4)
    s = s.lower().removeprefix("0x")
    if len(s) != want or any(c not in "0123456789abcdef" for c in s):
        raise ConfigError(f"PRF input must be {want} hex digits for ell={ell}")
    v = int(s, 16)
    if v >> ell:
        raise ConfigError(f"PRF input exceeds {ell} bits")
    return ((v >> np.arange(ell)) & 1).astype(np.int64)


def _load(path, cfg, expect=None):
    params, objs = read_file(path)
    if params != cfg.params.replace(strict_mode=False):
        raise ConfigError(f"{path}: parameters differ from the active configuration")
    if expect is not None and len(objs) != expect:
        raise FormatError(f"{path}: expected {expect} records, found {len(objs)}")
    return objs


def _state_lines(state) -> list[str]:
    return ["state " + ln for ln in coset.dump_state(state).splitlines()]


# ------------------------------------------------------------ commands

def run(args, cfg) -> tuple[ExperimentReport, int]:
    P = cfg.params
    rep = ExperimentReport(args.cmd, cfg)
    rng = stream(cfg.seed, "cli/" + args.cmd)
    rc = 0
    c = args.cmd

    if c == "keygen":
        os.makedirs(args.out, exist_ok=True)
        pk, key, msk = dr.keygen(P, rng, mode=args.mode)
        write_file(os.path.join(args.out, "pk.rvlc"), P, [pk])
        write_file(os.path.join(args.out, "sk.rvlc"), P, [key])
        write_file(os.path.join(args.out, "msk.rvlc"), P, [msk])
        if key.quantum:
            ok = dr.revoke(msk, pk, key, P, rng)
            rep.lines.append(f"self_check_revoke={ok.value}")
            rc = 0 if ok else 1
            if args.dump_state:
                rep.lines += _state_lines(key.state)
        rep.lines.append("y=" + ",".join(map(str, pk.y)))

    elif c == "enc":
        (pk,) = _load(args.pk, cfg, 1)
        cts = dr.encrypt_multi(pk, _bits(args.bits), P, rng)
        write_file(args.out, P, cts)
        rep.lines.append(f"ciphertexts={len(cts)}")

    elif c == "dec":
        (key,) = _load(args.sk, cfg, 1)
        if isinstance(key, coset.PureState):
            key = dr.DrDecKey(state=key)
        cts = _load(args.ct, cfg)
        bits, post = dr.decrypt_multi(key, cts, P, rng)
        rep.lines.append("bits=" + "".join(map(str, bits)))
        if args.dump_state and post.quantum:
            rep.lines += _state_lines(post.state)

    elif c == "revoke":
        (pk,) = _load(args.pk, cfg, 1)
        (msk,) = _load(args.msk, cfg, 1)
        (st,) = _load(args.state, cfg, 1)
        if isinstance(st, dr.DrDecKey):
            raise ConfigError("a classical key cannot be revoked by projection")
        v = dr.revoke(msk, pk, st, P, rng)
        rep.lines.append(f"verdict={v.value}")
        rc = 0 if v else 1

    elif c == "fhe-enc":
        (pk,) = _load(args.pk, cfg, 1)
        cts = [gsw.gsw_encrypt(pk, b, P, rng) for b in _bits(args.bits)]
        write_file(args.out, P, cts)
        rep.lines.append(f"ciphertexts={len(cts)}")

    elif c == "fhe-eval":
        with open(args.netlist) as f:
            circ = gsw.NandCircuit.parse(f.read())
        cts = _load(args.ct, cfg)
        out = gsw.eval_circuit(cts, circ, P)
        write_file(args.out, P, [out])
        rep.lines += [f"depth={circ.depth}", f"level={out.level}"]

    elif c == "fhe-dec":
        (key,) = _load(args.sk, cfg, 1)
        cts = _load(args.ct, cfg)
        bits = []
        for ct in cts:
            if isinstance(key, dr.DrDecKey):
                bits.append(gsw.gsw_decrypt(key, ct, P.q))
            else:
                b, dk = gsw.gsw_decrypt_quantum(dr.DrDecKey(state=key), ct, P, rng, purified=True)
                key = dk.state
                bits.append(b)
        rep.lines.append("bits=" + "".join(map(str, bits)))

    elif c == "prf-gen":
        os.makedirs(args.out, exist_ok=True)
        k, qk, msk = rprf.prf_gen(P, rng, mode=args.mode)
        write_file(os.path.join(args.out, "prf.rvlc"), P, prf_key_objects(k))
        write_file(os.path.join(args.out, "qkey.rvlc"), P, qprf_key_objects(qk))
        write_file(os.path.join(args.out, "msk.rvlc"), P, [msk])
        rep.lines += [f"ell={P.ell}", "y=" + ",".join(map(str, k.y))]
        if qk.quantum:
            ok = rprf.prf_revoke(msk, qk, qk, P, rng)
            rep.lines.append(f"self_check_revoke={ok.value}")
            rc = 0 if ok else 1
            if args.dump_state:
                rep.lines += _state_lines(qk.state)

    elif c == "prf-eval":
        objs = _load(args.key, cfg, 3)
        x = _hex_input(args.input, P.ell)
        if isinstance(objs[1], rprf.ShiftHidingSK):
            val = rprf.prf(prf_key_from(objs), x, P)
        else:
            val, post = rprf.eval_quantum(qprf_key_from(objs), x, P, rng)
            if args.dump_state and post.quantum:
                rep.lines += _state_lines(post.state)
        rep.lines.append("output=" + "".join(map(str, val)))

    elif c == "prf-revoke":
        qk = qprf_key_from(_load(args.qkey, cfg, 3))
        (msk,) = _load(args.msk, cfg, 1)
        objs = _load(args.state, cfg)
        st = objs[-1]
        if isinstance(st, dr.DrDecKey):
            raise ConfigError("a classical key cannot be revoked by projection")
        v = rprf.prf_revoke(msk, qk, st, P, rng)
        rep.lines.append(f"verdict={v.value}")
        rc = 0 if v else 1

    elif c == "experiment":
        if args.game == "pke":
            stats = dr.run_pke_experiment(args.adversary, P, cfg.trials, cfg.seed,
                                          plaintext_after_revoke=not args.plaintext_before_revoke)
        else:
            stats = rprf.run_prf_experiment(args.adversary, args.mu, P, cfg.trials, cfg.seed)
        rep.lines += [f"game={args.game}", f"adversary={args.adversary}"]
        if args.records:
            rep.records = [dict(index=r.index, valid=r.valid, b=r.b,
                                guess=-1 if r.guess is None else r.guess, success=r.success)
                           for r in sorted(stats.records, key=lambda r: r.index)]
        rep.summary.update(binomial_summary("success", stats.successes, stats.trials))
        rep.summary.update(binomial_summary("valid", stats.valid, stats.trials))

    elif c == "lemmas":
        rep.lemmas = red.lemma_suite(P, rng)
        bad = sum(not r.holds for r in rep.lemmas)
        rep.summary.update(checks=len(rep.lemmas), failed=bad)
        rc = 1 if bad else 0

    elif c == "sis-demo":
        A = gen_trap(P.n, P.m, P.q, rng).A
        oracle = red.sis_success_oracle(A, P.sigma, P.q)
        wins = 0
        for i in range(cfg.trials):
            sol = red.sis_solver(A, red.KeepOnePreimage(stream(cfg.seed, "sis/adversary", i)), P,
                                 stream(cfg.seed, "sis/challenger", i))
            if sol is not None:
                if not red.verify_sis(red.SisInstance(A, P.sigma * np.sqrt(2 * P.m), P.q), sol):
                    raise CheckFailed("sis_solver returned an unverified vector")
                wins += 1
        rep.lines.append("A=" + ";".join(",".join(map(str, r)) for r in A))
        rep.summary.update(binomial_summary("success", wins, cfg.trials))
        rep.summary["oracle_rate"] = float(oracle)

    return rep, rc


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, args.preset, {"seed": args.seed, "trials": args.trials})
        rep, rc = run(args, cfg)
    except (ConfigError, FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ParameterError, ResourceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CheckFailed, dr.ExperimentAbort, AssertionError) as e:
        print(f"check failed: {e}", file=sys.stderr)
        return 1
    rep.wall_clock = time.perf_counter() - t0
    text = save_report(rep, args.report, args.format, clock=not args.no_clock)
    if not args.report:
        sys.stdout.write(text)
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
