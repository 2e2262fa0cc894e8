"""Command-line front end.

Exit codes: 0 success, 1 usage or I/O error, 2 invalid box, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

from .box import (Box, BoxFormatError, InvalidMixtureError, Mixture, box_to_dict, format_fraction,
                  make_deterministic, make_pr, maximally_mixed, mix, read_box, validate, write_box)
from .decomposition import (DEFAULT_MAX_ITERS, DEFAULT_RESTARTS, TheoremCounterexampleError,
                            decompose_pr_fraction, find_dim2_model)
from .measures import decompose_over_vertices, is_local_chsh, is_local_lp, nl
from .report import certificate_to_dict, decimal, nl_report_to_dict
from .secrecy import (Thresholds, key_rate, key_rate_closed_form, match_noisy_pr, noisy_pr,
                      simulate_protocol, thresholds, werner_to_ppr)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3

CSV_HEADER = ["param", "nl", "chsh_max", "i_ab", "key_rate",
              "bell_nonlocal", "entanglement_certified", "quantum_realizable"]


class UsageError(Exception):
    pass


# -- box spec grammar --------------------------------------------------------

class SpecError(UsageError):
    def __init__(self, message: str, pos: int, text: str):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.pos = pos


class _SpecParser:
    """Recursive-descent parser for ``det:|pr:|noise|noisy-pr:|mix:`` specs."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise SpecError(msg, self.pos, self.text)

    def eat(self, token: str) -> bool:
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str):
        if not self.eat(token):
            self.error(f"expected {token!r}")

    def bits(self, n: int) -> tuple[int, ...]:
        chunk = self.text[self.pos:self.pos + n]
        if len(chunk) != n or any(c not in "01" for c in chunk):
            self.error(f"expected {n} bits")
        self.pos += n
        return tuple(int(c) for c in chunk)

    def rational(self) -> Fraction:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] in "0123456789./-":
            self.pos += 1
        raw = self.text[start:self.pos]
        try:
            return Fraction(raw)
        except (ValueError, ZeroDivisionError):
            self.pos = start
            self.error("expected rational number")

    def spec(self) -> Box:
        if self.eat("det:"):
            return make_deterministic(*self.bits(4))
        if self.eat("pr:"):
            return make_pr(*self.bits(3))
        if self.eat("noisy-pr:"):
            labels = self.bits(3)
            self.expect(":")
            start = self.pos
            p = self.rational()
            if not 0 <= p <= 1:
                self.pos = start
                self.error("noisy-pr weight must lie in [0, 1]")
            return noisy_pr(*labels, p)
        if self.eat("noise"):
            return maximally_mixed()
        if self.eat("mix:"):
            terms = [self.term()]
            while self.eat("+"):
                terms.append(self.term())
            try:
                return mix(Mixture(tuple(terms)))
            except InvalidMixtureError as exc:
                raise UsageError(f"weight-sum error: {exc}") from None
        if self.eat("("):
            inner = self.spec()
            self.expect(")")
            return inner
        self.error("unknown box spec")

    def term(self):
        w = self.rational()
        self.expect("*")
        return w, self.spec()

    def parse(self) -> Box:
        b = self.spec()
        if self.pos != len(self.text):
            self.error("trailing input")
        return b


def parse_box_spec(text: str) -> Box:
    return _SpecParser(text.strip()).parse()


# -- helpers -----------------------------------------------------------------

def _load_box(path: str) -> Box:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return read_box(text)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NSBOX_THREADS", "") or os.cpu_count() or 1))
    except ValueError:
        return 1


def _parallel_map(fn, items):
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(fn, items))


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _ratio(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v)
    return f"{v} ({decimal(v)})"


# -- make ----------------------------------------------------------------------

def cmd_make(args) -> int:
    _emit(write_box(parse_box_spec(args.spec)), args.out)
    return EXIT_OK


# -- analyze -------------------------------------------------------------------

def analyze_box(b: Box) -> dict:
    """Assemble the analysis report as a JSON-shaped dict."""
    v = validate(b)
    report = {"validation": {"ok": v.ok, "nonnegative": v.nonnegative, "normalized": v.normalized,
                             "nonsignaling": v.nonsignaling, "failures": v.failures()}}
    if not v.ok:
        return report
    r = nl(b)
    report["nl_report"] = nl_report_to_dict(r)
    report["locality"] = {"chsh": certificate_to_dict(is_local_chsh(b)),
                          "lp": certificate_to_dict(is_local_lp(b))}
    report["pr_fraction"] = format_fraction(r.pr_fraction)
    fam = match_noisy_pr(b)
    if fam is not None:
        labels, p = fam
        report["noisy_pr"] = {"label": "".join(map(str, labels)), "p_pr": format_fraction(p),
                              "thresholds": asdict(thresholds(p))}
    return report


def _analyze_text(report: dict) -> str:
    lines = []
    v = report["validation"]
    lines.append(f"valid: {v['ok']}")
    for f in v["failures"]:
        lines.append(f"  {f}")
    if "nl_report" not in report:
        return "\n".join(lines) + "\n"
    r = report["nl_report"]
    fr = lambda s: _ratio(Fraction(s))  # noqa: E731
    c = r["correlators"]
    lines.append("correlators <A_x B_y>: " + "  ".join(
        f"e{x}{y}={fr(c['e'][x][y])}" for x in (0, 1) for y in (0, 1)))
    lines.append("marginals: " + "  ".join(
        [f"<A{x}>={fr(c['ma'][x])}" for x in (0, 1)] + [f"<B{y}>={fr(c['mb'][y])}" for y in (0, 1)]))
    lines.append("CHSH: " + "  ".join(f"B{k}={fr(val)}" for k, val in r["chsh"].items()))
    lines.append("covCHSH: " + "  ".join(f"{i}:{fr(val)}" for i, val in enumerate(r["covchsh"])))
    lines.append("Gamma: " + "  ".join(f"{i + 1}:{fr(val)}" for i, val in enumerate(r["gamma"])))
    lines.append(f"NL: {fr(r['nl'])}")
    lines.append(f"PR fraction: {fr(report['pr_fraction'])}")
    chsh_cert, lp_cert = report["locality"]["chsh"], report["locality"]["lp"]
    verdict = "local" if chsh_cert["is_local"] else "nonlocal"
    lines.append(f"Bell locality (CHSH facets): {verdict}, max |B| at B{chsh_cert['label']} = "
                 f"{fr(chsh_cert['value'])}")
    lines.append(f"Bell locality (exact LP): {'local' if lp_cert['is_local'] else 'nonlocal'}")
    if "noisy_pr" in report:
        fam = report["noisy_pr"]
        lines.append(f"noisy PR family: label {fam['label']}, p_pr = {fr(fam['p_pr'])}")
        for k, val in fam["thresholds"].items():
            lines.append(f"  {k}: {val}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    b = _load_box(args.path)
    report = analyze_box(b)
    if args.json:
        sys.stdout.write(json.dumps(report, indent=1) + "\n")
    else:
        sys.stdout.write(_analyze_text(report))
    return EXIT_OK if report["validation"]["ok"] else EXIT_INVALID


# -- decompose -----------------------------------------------------------------

def _write_components(out_dir: str | None, mode: str, components, extra: dict) -> dict:
    manifest = {"format": "nsbox-manifest/1", "mode": mode, "components": [], **extra}
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    for k, (label, w, b) in enumerate(components):
        entry = {"label": label, "weight": format_fraction(w)}
        if out_dir:
            name = f"component_{k:02d}.json"
            (Path(out_dir) / name).write_text(write_box(b))
            entry["file"] = name
        else:
            entry["box"] = box_to_dict(b)["p"]
        manifest["components"].append(entry)
    if out_dir:
        (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def cmd_decompose(args) -> int:
    b = _load_box(args.path)
    v = validate(b)
    if not v.ok:
        sys.stderr.write("invalid box: " + "; ".join(v.failures()) + "\n")
        return EXIT_INVALID
    if args.mode == "pr-fraction":
        try:
            dec = decompose_pr_fraction(b)
        except TheoremCounterexampleError as exc:
            sys.stderr.write(f"verification failure: {exc}\n")
            sys.stdout.write(json.dumps({"p_pr": format_fraction(exc.p_pr), "candidates": [
                {**d, "chsh": format_fraction(d["chsh"])} for d in exc.diagnostics]}, indent=1) + "\n")
            return EXIT_VERIFY
        components = [(str(dec.pr_vertex) if dec.pr_vertex else "none", dec.p_pr,
                       dec.pr_vertex.box() if dec.pr_vertex else maximally_mixed()),
                      ("residual", 1 - dec.p_pr, dec.residual)]
        manifest = _write_components(args.out_dir, args.mode, components, {
            "checks": dec.checks, "alternatives": [str(a) for a in dec.alternatives]})
        sys.stdout.write(json.dumps(manifest, indent=1) + "\n")
        return EXIT_OK if dec.ok else EXIT_VERIFY
    if args.mode == "vertex":
        m = decompose_over_vertices(b)
        ok = mix(m) == b
        components = [(str(lab), w, vb) for lab, (w, vb) in zip(m.labels, m.components)]
        manifest = _write_components(args.out_dir, args.mode, components, {"reconstructs": ok})
        sys.stdout.write(json.dumps(manifest, indent=1) + "\n")
        return EXIT_OK if ok else EXIT_VERIFY
    res = find_dim2_model(b, restarts=args.restarts, max_iters=args.max_iters, seed=args.seed)
    out = {"mode": "dim2", "status": res.status, "residual_l1": res.residual_l1,
           "restarts_used": res.restarts_used}
    if res.found:
        m = res.model.rationalize()
        out["model"] = {"weights": [format_fraction(w) for w in m.weights],
                        "alice": [[[format_fraction(v) for v in row] for row in t] for t in m.alice],
                        "bob": [[[format_fraction(v) for v in row] for row in t] for t in m.bob]}
    sys.stdout.write(json.dumps(out, indent=1) + "\n")
    return EXIT_OK


# -- keyrate -------------------------------------------------------------------

def _werner_thresholds(w: Fraction) -> Thresholds:
    """Flags for ``p_pr = W/sqrt2`` decided exactly on ``W``."""
    return Thresholds(bell_nonlocal=w * w > Fraction(1, 2), entanglement_certified=w > Fraction(1, 2),
                      quantum_realizable=w <= 1, drn_present=w > 0)


def keyrate_row(param, b: Box, flags: Thresholds | None) -> list[str]:
    r = nl(b)
    k = key_rate(b)
    row = ["" if param is None else decimal(param), decimal(r.nl), decimal(r.chsh_max),
           decimal(k.i_ab), decimal(k.key_rate_lower_bound)]
    if flags is None:
        row += ["", "", ""]
    else:
        row += [str(flags.bell_nonlocal).lower(), str(flags.entanglement_certified).lower(),
                str(flags.quantum_realizable).lower()]
    return row


def _sweep_values(spec: str) -> list[Fraction]:
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = Fraction(lo), Fraction(hi), int(n)
    except ValueError:
        raise UsageError(f"sweep must be lo:hi:n, got {spec!r}") from None
    if n < 1:
        raise UsageError("sweep needs n >= 1")
    if n == 1:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _family_point(kind: str, value: Fraction):
    if not 0 <= value <= 1:
        raise UsageError(f"{kind} value {value} outside [0, 1]")
    if kind == "p":
        return value, noisy_pr(0, 0, 0, value), thresholds(value)
    return value, noisy_pr(0, 0, 0, Fraction(werner_to_ppr(value))), _werner_thresholds(value)


def cmd_keyrate(args) -> int:
    sources = [s for s in (args.p, args.werner, args.sweep) if s is not None]
    if args.box is not None:
        if sources:
            raise UsageError("--box cannot be combined with --p, --werner or --sweep")
        b = _load_box(args.box)
        if not validate(b).ok:
            sys.stderr.write("invalid box\n")
            return EXIT_INVALID
        fam = match_noisy_pr(b)
        rows = [keyrate_row(None if fam is None else fam[1], b,
                            None if fam is None else thresholds(fam[1]))]
    else:
        if len(sources) != 1:
            raise UsageError("give exactly one of --p, --werner, --sweep")
        if args.sweep is not None:
            points = [(args.sweep_param, v) for v in _sweep_values(args.sweep)]
        elif args.p is not None:
            points = [("p", _parse_value(args.p))]
        else:
            points = [("werner", _parse_value(args.werner))]
        prepared = [_family_point(kind, v) for kind, v in points]
        rows = _parallel_map(lambda pt: keyrate_row(*pt), prepared)
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
        sys.stdout.write(buf.getvalue())
    else:
        for row in rows:
            sys.stdout.write("  ".join(f"{h}={v}" for h, v in zip(CSV_HEADER, row)) + "\n")
    return EXIT_OK


def _parse_value(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a number: {text!r}") from None


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.box is not None:
        b = _load_box(args.box)
        if not validate(b).ok:
            sys.stderr.write("invalid box\n")
            return EXIT_INVALID
    elif args.p is not None:
        b = _family_point("p", _parse_value(args.p))[1]
    elif args.werner is not None:
        b = _family_point("werner", _parse_value(args.werner))[1]
    else:
        raise UsageError("give --box, --p or --werner")
    if args.rounds < 1:
        raise UsageError("--rounds must be >= 1")
    t = simulate_protocol(b, args.rounds, args.seed)
    lines = [f"seed: {t.seed}", f"rounds: {t.rounds}"]
    for x in (0, 1):
        for y in (0, 1):
            n = int(t.counts[x, y].sum())
            lines.append(f"pair x={x} y={y}: " + (f"{n} rounds" if n else "absent"))
    if t.nl_report is None:
        lines.append("empirical nl: unavailable")
        lines.append("empirical i_ab: unavailable")
    else:
        lines.append(f"empirical nl: {decimal(t.nl_report.nl)}")
        lines.append(f"empirical i_ab: {decimal(t.key.i_ab)}")
        lines.append(f"empirical key_rate: {decimal(t.key.key_rate_lower_bound)}")
        if args.compare_analytic:
            nl_exact = nl(b).nl
            i_exact = key_rate(b).i_ab
            se_nl, se_i = t.nl_standard_error(), t.i_ab_standard_error()
            fam = match_noisy_pr(b)
            if fam is not None:
                i_exact = key_rate_closed_form(fam[1])
            lines.append(f"analytic nl: {decimal(nl_exact)}  se: {decimal(se_nl)}  z: "
                         f"{decimal((float(t.nl_report.nl) - float(nl_exact)) / se_nl) if se_nl else 'n/a'}")
            lines.append(f"analytic i_ab: {decimal(i_exact)}  se: {decimal(se_i)}  z: "
                         f"{decimal((t.key.i_ab - i_exact) / se_i) if se_i else 'n/a'}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsbox", description="Nonsignaling box analysis toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make", help="construct a box from a spec")
    p.add_argument("spec", help="det:abce | pr:abc | noise | noisy-pr:abc:p | mix:w*S+...")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_make)

    p = sub.add_parser("analyze", help="NL report and locality certificates")
    p.add_argument("path", help="nsbox/1 document, '-' for stdin")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("decompose", help="PR-fraction, vertex or dimension-2 decomposition")
    p.add_argument("path")
    p.add_argument("--mode", choices=["pr-fraction", "vertex", "dim2"], default="pr-fraction")
    p.add_argument("--out-dir", help="write component boxes and manifest.json here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("keyrate", help="analytic key-rate bound of the CHSH protocol")
    p.add_argument("--family", choices=["noisy-pr"], default="noisy-pr")
    p.add_argument("--box")
    p.add_argument("--p")
    p.add_argument("--werner")
    p.add_argument("--sweep", help="lo:hi:n, inclusive grid")
    p.add_argument("--sweep-param", choices=["p", "werner"], default="p")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("simulate", help="Monte Carlo run of the CHSH protocol")
    p.add_argument("--box")
    p.add_argument("--family", choices=["noisy-pr"], default="noisy-pr")
    p.add_argument("--p")
    p.add_argument("--werner")
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--compare-analytic", action="store_true")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, BoxFormatError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
