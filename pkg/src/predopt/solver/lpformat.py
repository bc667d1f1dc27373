"""Dump an LpProblem in CPLEX LP text format for cross-checking elsewhere."""

from __future__ import annotations

import io

import numpy as np

from .lp import EQ, GE, LE, LpProblem


def _terms(coeffs, names) -> str:
    parts = []
    for a, name in zip(coeffs, names):
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {abs(a)!r} {name}")
    if not parts:
        return "0 " + names[0]
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(problem: LpProblem, stream=None, integral_mask=None) -> str:
    """Write ``problem`` (minimization) as LP text; returns the text as well."""
    names = list(problem.names) if problem.names else [f"x{j}" for j in range(problem.n)]
    out = io.StringIO()
    out.write("\\ written by predopt\nMinimize\n")
    out.write(f" obj: {_terms(problem.objective, names)}\n")
    out.write("Subject To\n")
    ops = {LE: "<=", GE: ">=", EQ: "="}
    for i in range(problem.m):
        out.write(f" c{i}: {_terms(problem.A[i], names)} {ops[problem.senses[i]]} {problem.rhs[i]!r}\n")
    out.write("Bounds\n")
    for j, name in enumerate(names):
        up = problem.upper[j]
        up_text = "+inf" if not np.isfinite(up) else repr(float(up))
        out.write(f" {float(problem.lower[j])!r} <= {name} <= {up_text}\n")
    if integral_mask is not None:
        binaries = [n for n, flag in zip(names, integral_mask) if flag]
        if binaries:
            out.write("Binaries\n")
            for k in range(0, len(binaries), 8):
                out.write(" " + " ".join(binaries[k:k + 8]) + "\n")
    out.write("End\n")
    text = out.getvalue()
    if stream is not None:
        if hasattr(stream, "write"):
            stream.write(text)
        else:
            with open(stream, "w") as fh:
                fh.write(text)
    return text
