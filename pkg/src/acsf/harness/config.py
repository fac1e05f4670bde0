"""JSON experiment configuration: models, metrics, initial curves and presets.

A configuration is a plain dictionary::

    {
      "scheme": "fdani" | "fdbgn" | "fdriem" | "fdhypbol",
      "model":  {"variant": ..., "params": {...}},      # fdani / fdbgn
      "metric": {"variant": ..., "params": {...}},      # fdriem / fdhypbol
      "J": 128, "dt": 1e-4, "T": 0.5,
      "initial": {"shape": ..., ...},
      "forcing": null | {"variant": "wulff_ellipse", "delta": 0.5},
      "exact": null | {"variant": ..., ...},
      "splitting": 0.0,
      "newton": {"tol": 1e-10, "max_iter": 20},
      "observers": {"stride": 10, "snapshot_times": [...], "kinds": [...]}
    }

Model variants: ``isotropic``, ``kfold`` (k, delta), ``elliptic`` (delta),
``regularized_polygon`` (L, delta), ``bgn`` (matrices). Metric variants:
``hyperbolic``, ``flat_conformal``, ``flat``, ``cone`` (b),
``two_mountains`` (lambda1, lambda2). Initial shapes: ``circle`` (center,
radius), ``ellipse`` (center, a, b), ``wulff`` (scale), ``polygon``
(vertices), ``disk_square`` and ``octagonal_polygon`` (area).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from ..aniso import BGN, Anisotropy, Isotropic, SmoothKFold, elliptic, regularized_polygon, sample_wulff
from ..geom import DiscreteCurve, equidistribute, polygon_curve
from ..metric import Cone, MetricField, TwoMountains, flat_conformal, flat_graph, hyperbolic
from ..schemes import SchemeConfig, manufactured_forcing
from ..solver import NewtonSettings
from .exact import ConeCircle, ExactSolution, HyperbolicCircle, WulffEllipse

__all__ = [
    "PRESETS",
    "build_model",
    "build_metric",
    "build_initial",
    "build_exact",
    "build_scheme_config",
    "load_config",
    "preset_config",
    "disk_square_vertices",
    "octagonal_polygon_vertices",
]


def build_model(spec: dict | None) -> Anisotropy | None:
    if spec is None:
        return None
    v, p = spec.get("variant"), spec.get("params", {})
    if v == "isotropic":
        return Isotropic()
    if v == "kfold":
        return SmoothKFold(int(p["k"]), float(p["delta"]))
    if v == "elliptic":
        return elliptic(float(p.get("delta", 0.5)))
    if v == "regularized_polygon":
        return regularized_polygon(int(p["L"]), float(p["delta"]))
    if v == "bgn":
        return BGN(p["matrices"])
    raise ValueError(f"unknown anisotropy variant {v!r}")


def build_metric(spec: dict | None) -> MetricField | None:
    if spec is None:
        return None
    v, p = spec.get("variant"), spec.get("params", {})
    if v == "hyperbolic":
        return hyperbolic()
    if v == "flat_conformal":
        return flat_conformal()
    if v == "flat":
        return flat_graph()
    if v == "cone":
        return Cone(float(p.get("b", np.sqrt(3.0))))
    if v == "two_mountains":
        return TwoMountains(float(p["lambda1"]), float(p["lambda2"]))
    raise ValueError(f"unknown metric variant {v!r}")


def disk_square_vertices(n_arc: int = 2000) -> np.ndarray:
    """Unit disk merged with the square ``[-2, 0]^2``, traversed anticlockwise.

    A three-quarter arc of the unit circle from ``(0, -1)`` to ``(-1, 0)``
    followed by three sides of the square.
    """
    th = np.linspace(-0.5 * np.pi, np.pi, n_arc)
    arc = np.column_stack([np.cos(th), np.sin(th)])
    corners = np.array([[-2.0, 0.0], [-2.0, -2.0], [0.0, -2.0]])
    return np.vstack([arc, corners])


def octagonal_polygon_vertices(area: float = 136.0) -> np.ndarray:
    """Point symmetric nonconvex polygon whose edge normals are multiples of 45 degrees.

    Consecutive edges turn by exactly +-45 degrees, so every pair of
    neighbouring edges is also a pair of neighbouring facets of the regular
    octagon. The polygon is scaled to the given area.
    """
    dirs = np.array([0, 1, 2, 1, 2, 3]) * (np.pi / 4.0)
    lengths = np.array([2.0, 1.0, 1.0, 0.7, 1.0, 1.2])
    dirs = np.concatenate([dirs, dirs + np.pi])
    lengths = np.concatenate([lengths, lengths])
    edges = lengths[:, None] * np.column_stack([np.cos(dirs), np.sin(dirs)])
    V = np.vstack([[0.0, 0.0], np.cumsum(edges, axis=0)[:-1]])
    V = V - V.mean(axis=0)
    x, y = V[:, 0], V[:, 1]
    a0 = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    return V * np.sqrt(area / a0)


def build_initial(spec: dict, J: int, model: Anisotropy | None = None) -> DiscreteCurve:
    shape = spec.get("shape", "circle")
    c = np.asarray(spec.get("center", [0.0, 0.0]), dtype=float)
    if shape == "circle":
        r = float(spec.get("radius", 1.0))
        w = 2.0 * np.pi
        return DiscreteCurve(c + r * np.column_stack([np.cos(w * np.arange(J) / J), np.sin(w * np.arange(J) / J)]))
    if shape == "ellipse":
        a, b = float(spec.get("a", 1.0)), float(spec.get("b", 1.0))
        w = 2.0 * np.pi
        return equidistribute(lambda r: c + np.column_stack([a * np.cos(w * r), b * np.sin(w * r)]), J)
    if shape == "wulff":
        if model is None:
            raise ValueError("a Wulff initial curve needs an anisotropy model")
        pts = float(spec.get("scale", 1.0)) * sample_wulff(model, int(spec.get("samples", 4 * J)))
        return polygon_curve(c + pts, J)
    if shape == "polygon":
        return polygon_curve(np.asarray(spec["vertices"], dtype=float), J)
    if shape == "disk_square":
        return polygon_curve(disk_square_vertices(), J)
    if shape == "octagonal_polygon":
        return polygon_curve(octagonal_polygon_vertices(float(spec.get("area", 136.0))), J)
    raise ValueError(f"unknown initial shape {shape!r}")


def build_exact(spec: dict | None) -> ExactSolution | None:
    if spec is None:
        return None
    v = spec.get("variant")
    if v == "wulff_ellipse":
        return WulffEllipse(float(spec.get("delta", 0.5)))
    if v == "cone_circle":
        return ConeCircle(float(spec.get("b", np.sqrt(3.0))), float(spec.get("r0", 1.0)))
    if v == "hyperbolic_circle":
        return HyperbolicCircle(float(spec.get("a0", 2.0)), float(spec.get("r0", 1.0)))
    raise ValueError(f"unknown exact solution {v!r}")


def build_scheme_config(cfg: dict) -> SchemeConfig:
    model = build_model(cfg.get("model"))
    metric = build_metric(cfg.get("metric"))
    forcing = None
    if cfg.get("forcing"):
        f = cfg["forcing"]
        if f.get("variant", "wulff_ellipse") != "wulff_ellipse":
            raise ValueError(f"unknown forcing {f.get('variant')!r}")
        forcing = manufactured_forcing(float(f.get("delta", 0.5)))
    newton = NewtonSettings(**cfg.get("newton", {}))
    return SchemeConfig(
        cfg["scheme"],
        float(cfg["dt"]),
        float(cfg["T"]),
        model=model,
        metric=metric,
        newton=newton,
        forcing=forcing,
        splitting=float(cfg.get("splitting", 0.0)),
    )


def _times(start, stop, step, extra=()):
    n = int(round((stop - start) / step))
    return [round(start + i * step, 12) for i in range(n + 1)] + list(extra)


PRESETS: dict[str, dict] = {
    "fig1_ellipse": {
        "scheme": "fdani",
        "model": {"variant": "elliptic", "params": {"delta": 0.5}},
        "J": 128, "dt": 1e-4, "T": 0.499,
        "initial": {"shape": "wulff"},
        "observers": {"snapshot_times": _times(0, 0.45, 0.05, [0.499])},
    },
    "fig4_kfold3": {
        "scheme": "fdani",
        "model": {"variant": "kfold", "params": {"k": 3, "delta": 0.124}},
        "J": 128, "dt": 1e-4, "T": 0.5,
        "initial": {"shape": "circle", "radius": 1.0},
        "observers": {"snapshot_times": _times(0, 0.5, 0.05)},
    },
    "fig4_kfold6": {
        "scheme": "fdani",
        "model": {"variant": "kfold", "params": {"k": 6, "delta": 0.028}},
        "J": 128, "dt": 1e-4, "T": 0.5,
        "initial": {"shape": "circle", "radius": 1.0},
        "observers": {"snapshot_times": _times(0, 0.5, 0.05)},
    },
    "fig5_square": {
        "scheme": "fdbgn",
        "model": {"variant": "regularized_polygon", "params": {"L": 2, "delta": 1e-2}},
        "J": 128, "dt": 1e-4, "T": 0.35,
        "initial": {"shape": "circle", "radius": 1.0},
        "observers": {"snapshot_times": _times(0, 0.35, 0.05)},
    },
    "fig6_oott": {
        "scheme": "fdbgn",
        "model": {"variant": "regularized_polygon", "params": {"L": 2, "delta": 1e-2}},
        "J": 256, "dt": 1e-4, "T": 0.75,
        "initial": {"shape": "disk_square"},
        "observers": {"snapshot_times": _times(0, 0.7, 0.1, [0.75])},
    },
    "fig7_almgren_taylor": {
        "scheme": "fdbgn",
        "model": {"variant": "regularized_polygon", "params": {"L": 4, "delta": 1e-4}},
        "J": 512, "dt": 1e-4, "T": 3.4,
        "initial": {"shape": "octagonal_polygon", "area": 136.0},
        "observers": {"snapshot_times": _times(0, 3.2, 0.4, [3.4])},
    },
    "fig9_hyperbolic": {
        "scheme": "fdhypbol",
        "metric": {"variant": "hyperbolic"},
        "J": 128, "dt": 1e-4, "T": 0.14,
        "initial": {"shape": "circle", "center": [2.0, 0.0], "radius": 1.0},
        "exact": {"variant": "hyperbolic_circle", "a0": 2.0, "r0": 1.0},
        "observers": {"snapshot_times": _times(0, 0.14, 0.02)},
    },
    "fig10_cone_homotopic": {
        "scheme": "fdriem",
        "metric": {"variant": "cone", "params": {"b": float(np.sqrt(3.0))}},
        "J": 128, "dt": 1e-4, "T": 1.8,
        "initial": {"shape": "circle", "center": [2.0, 0.0], "radius": 1.35},
        "observers": {"snapshot_times": [0.0, 1.0, 1.8]},
    },
    "fig10_cone_winding": {
        "scheme": "fdriem",
        "metric": {"variant": "cone", "params": {"b": float(np.sqrt(3.0))}},
        "J": 128, "dt": 1e-4, "T": 1.1,
        "initial": {"shape": "circle", "center": [0.2, 0.0], "radius": 0.8},
        "observers": {"snapshot_times": [0.0, 0.2, 0.6, 1.0, 1.1]},
    },
    "fig11_mountains_small": {
        "scheme": "fdriem",
        "metric": {"variant": "two_mountains", "params": {"lambda1": 1.0, "lambda2": 1.0}},
        "J": 128, "dt": 1e-4, "T": 2.2,
        "initial": {"shape": "circle", "radius": 2.0},
        "observers": {"snapshot_times": [0.0, 1.0, 2.0, 2.2]},
    },
    "fig11_mountains_uneven": {
        "scheme": "fdriem",
        "metric": {"variant": "two_mountains", "params": {"lambda1": 5.0, "lambda2": 1.0}},
        "J": 128, "dt": 1e-4, "T": 4.0,
        "initial": {"shape": "circle", "radius": 2.0},
        "observers": {"snapshot_times": [0.0, 1.0, 2.0, 4.0]},
    },
    "fig12_mountains_stuck": {
        "scheme": "fdriem",
        "metric": {"variant": "two_mountains", "params": {"lambda1": 5.0, "lambda2": 5.0}},
        "J": 128, "dt": 1e-4, "T": 4.0,
        "initial": {"shape": "circle", "radius": 2.0},
        "observers": {"snapshot_times": [0.0, 1.0, 2.0, 4.0]},
        "checks": {"max_geodesic_curvature": 1e-2},
    },
}

# final times of the octagon-polygon run for other L
ALMGREN_TAYLOR_T = {2: 16.0, 3: 6.4, 4: 3.4}
DISK_SQUARE_T = {2: 0.75, 3: 0.3, 4: 0.16}


def preset_config(name: str, **overrides) -> dict:
    """Deep copy of a preset with top-level overrides applied."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[name])
    cfg["preset"] = name
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    return cfg


def load_config(path) -> dict:
    cfg = json.loads(Path(path).read_text())
    if "preset" in cfg:
        base = preset_config(cfg["preset"])
        base.update({k: v for k, v in cfg.items() if k != "preset"})
        base["preset"] = cfg["preset"]
        cfg = base
    for key in ("scheme", "J", "dt", "T"):
        if key not in cfg:
            raise ValueError(f"configuration is missing {key!r}")
    return cfg
