"""Fixed-width reflection files: h(4) k(4) l(4) F2(8.2) sigma(8.2)
batch(4) lambda(8.4), terminated by an all-zero index line."""

from __future__ import annotations

from ..crystal import Reflection


class HklParseError(ValueError):
    """Reflection file line does not fit the fixed-width layout."""


def format_reflection(r: Reflection) -> str:
    return (f"{r.h:4d}{r.k:4d}{r.l:4d}"
            f"{r.f_squared:8.2f}{r.sigma_f_squared:8.2f}"
            f"{r.batch:4d}{r.wavelength:8.4f}")


def write_hklf2(reflections: list[Reflection]) -> bytes:
    lines = [format_reflection(r) for r in reflections]
    lines.append(f"{0:4d}{0:4d}{0:4d}{0.0:8.2f}{0.0:8.2f}{0:4d}{0.0:8.4f}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_hklf2(data: bytes) -> list[Reflection]:
    reflections: list[Reflection] = []
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if len(line) < 40:
            raise HklParseError(
                f"line {lineno}: expected 40 columns, got {len(line)}")
        try:
            h = int(line[0:4])
            k = int(line[4:8])
            l = int(line[8:12])
            f2 = float(line[12:20])
            sigma = float(line[20:28])
            batch = int(line[28:32])
            lam = float(line[32:40])
        except ValueError:
            raise HklParseError(
                f"line {lineno}: non-numeric field in {line!r}") from None
        if h == 0 and k == 0 and l == 0:
            break
        reflections.append(Reflection(h=h, k=k, l=l, f_squared=f2,
                                      sigma_f_squared=sigma, batch=batch,
                                      wavelength=lam))
    return reflections
