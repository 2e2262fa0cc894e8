"""JSON-shaped serialization of reports; rationals travel as ``"n/d"`` strings."""

from __future__ import annotations

from fractions import Fraction

from .box import BITS, format_fraction, parse_rational
from .measures import CHSH_LABELS, CorrelatorSet, LocalityCertificate, NlReport


def decimal(v) -> str:
    return f"{float(v):.12g}"


def _label(lab) -> str:
    return "".join(map(str, lab))


def nl_report_to_dict(r: NlReport) -> dict:
    c = r.correlators
    f = format_fraction
    return {
        "correlators": {
            "e": [[f(c.e[x][y]) for y in BITS] for x in BITS],
            "ma": [f(v) for v in c.ma],
            "mb": [f(v) for v in c.mb],
        },
        "chsh": {_label(lab): f(r.chsh[lab]) for lab in CHSH_LABELS},
        "covchsh": [f(v) for v in r.covchsh],
        "gamma": [f(v) for v in r.gamma],
        "nl": f(r.nl),
    }


def nl_report_from_dict(d: dict) -> NlReport:
    p = parse_rational
    c = d["correlators"]
    corr = CorrelatorSet(tuple(tuple(p(v) for v in row) for row in c["e"]),
                         tuple(p(v) for v in c["ma"]), tuple(p(v) for v in c["mb"]))
    chsh = {tuple(int(ch) for ch in k): p(v) for k, v in d["chsh"].items()}
    return NlReport(corr, chsh, tuple(p(v) for v in d["covchsh"]),
                    tuple(p(v) for v in d["gamma"]), p(d["nl"]))


def certificate_to_dict(c: LocalityCertificate) -> dict:
    return {
        "is_local": c.is_local,
        "method": c.method,
        "weights": None if c.weights is None else [format_fraction(w) for w in c.weights],
        "label": None if c.label is None else _label(c.label),
        "value": None if c.value is None else format_fraction(c.value),
    }


def certificate_from_dict(d: dict) -> LocalityCertificate:
    return LocalityCertificate(
        is_local=bool(d["is_local"]),
        method=d["method"],
        weights=None if d["weights"] is None else tuple(parse_rational(w) for w in d["weights"]),
        label=None if d["label"] is None else tuple(int(ch) for ch in d["label"]),
        value=None if d["value"] is None else parse_rational(d["value"]),
    )
