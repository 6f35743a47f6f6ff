"""Name-based construction of catalog manifolds, potentials and systems.

Accepted forms: ``sphere:2``, ``sphere:2,1.5``, ``sphere(dim=2, radius=1.0)``,
``ellipsoid:1,1,1.5``, ``cylinder:1``, ``paraboloid:1``, ``flat:2``,
``torus:2,0.5`` (optionally ``torus(R=2, r=0.5, inj=0.5)``), and the flat-field
system ``line-sincos``. Potentials: ``zero``, ``height[:scale[,axis]]``,
``quadratic[:scale]``, ``gaussian``, joined with ``+`` and optionally scaled
as ``0.5*height``.
"""

import re

from .manifolds import Cylinder, Ellipsoid, Flat, ImplicitSurface, Paraboloid, Sphere, TorusConstraint
from .potentials import Combination, Height, QuadraticRadial, Rotation, Zero
from .systems import LineSinCos, SDESystem


class CatalogError(ValueError):
    """Unknown catalog name or malformed parameter list."""


_SPEC = re.compile(r"^\s*([A-Za-z][\w-]*)\s*(?:[:(]\s*(.*?)\s*\)?)?\s*$")


def parse_entry(text):
    """Split ``name:1,2`` / ``name(a=1, b=2)`` into ``(name, args, kwargs)``."""
    m = _SPEC.match(text)
    if not m:
        raise CatalogError(f"cannot parse {text!r}")
    name, body = m.group(1).lower(), m.group(2)
    args, kwargs = [], {}
    if body:
        for item in body.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" in item:
                k, v = item.split("=", 1)
                kwargs[k.strip()] = _number(v)
            else:
                args.append(_number(item))
    return name, args, kwargs


def _number(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise CatalogError(f"not a number: {text!r}") from exc


def _torus(R=2.0, r=0.5, inj=None):
    return ImplicitSurface(TorusConstraint(R, r), injectivity_radius=inj)


_MANIFOLDS = {
    "sphere": Sphere,
    "ellipsoid": Ellipsoid,
    "cylinder": Cylinder,
    "paraboloid": Paraboloid,
    "flat": Flat,
    "torus": _torus,
}

SYSTEM_ONLY = {"line-sincos": LineSinCos}


def make_manifold(text):
    name, args, kwargs = parse_entry(text)
    if name not in _MANIFOLDS:
        raise CatalogError(f"unknown manifold {name!r}; choose from {sorted(_MANIFOLDS)}")
    if name == "sphere" and args:
        args[0] = int(args[0])
    if name == "flat" and args:
        args[0] = int(args[0])
    try:
        return _MANIFOLDS[name](*args, **kwargs)
    except TypeError as exc:
        raise CatalogError(f"bad parameters for {name}: {exc}") from exc


def _potential_term(text):
    text = text.strip()
    scale = 1.0
    if "*" in text:
        s, text = text.split("*", 1)
        scale = _number(s)
    name, args, kwargs = parse_entry(text)
    if name == "zero":
        pot = Zero()
    elif name == "height":
        pot = Height(*args, **kwargs)
    elif name in ("quadratic", "quadratic-radial"):
        pot = QuadraticRadial(*args, **kwargs)
    elif name == "gaussian":
        pot = QuadraticRadial(1.0)
    else:
        raise CatalogError(f"unknown potential {name!r}")
    return scale, pot


def make_potential(text):
    terms = [_potential_term(t) for t in (text or "zero").split("+")]
    if len(terms) == 1 and terms[0][0] == 1.0:
        return terms[0][1]
    return Combination(terms)


def make_drift(text):
    if not text:
        return None
    name, args, kwargs = parse_entry(text)
    if name == "rotation":
        return Rotation(*args, **kwargs)
    raise CatalogError(f"unknown drift field {name!r}")


def make_system(manifold, h="zero", drift=None, diffusion_scale=1.0):
    """Build a system from catalog names (``line-sincos`` ignores h and drift)."""
    name = parse_entry(manifold)[0]
    if name in SYSTEM_ONLY:
        return SYSTEM_ONLY[name]()
    return SDESystem(make_manifold(manifold), make_potential(h), make_drift(drift), diffusion_scale)


CATALOG_EXAMPLES = (
    "sphere:1",
    "sphere:2",
    "sphere:3",
    "ellipsoid:1,1,1.5",
    "cylinder:1",
    "paraboloid:1",
    "flat:2",
    "torus:2,0.5",
)
