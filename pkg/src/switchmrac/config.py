"""Scenario configuration: YAML parsing, validation, canonical bundle access.

Configs are nested key/value documents with numeric arrays.  Validation
reports the first offending key by path; every structural invariant of the
plant, basis, and reference model is enforced at load time.
"""

from importlib import resources

import numpy as np
import yaml

from .dynamics import (
    BasisSpec,
    PlantSegment,
    ReferenceModelSpec,
    ReferenceSignalSpec,
    SwitchedPlantSpec,
    ideal_parameters,
)
from .engine import Scenario
from .errors import ConfigError, SwitchMracError


def canonical_path():
    """Filesystem path of the bundled canonical scenario."""
    return str(resources.files("switchmrac").joinpath("scenarios", "canonical.yaml"))


def _need(d, key, path):
    if key not in d:
        raise ConfigError("missing required key", path=f"{path}.{key}" if path else key)
    return d[key]


def _matrix(v, path):
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"not a numeric array: {exc}", path=path) from None
    if not np.all(np.isfinite(arr)):
        raise ConfigError("entries must be finite", path=path)
    return arr


def _float(v, path, allow_inf=False):
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError("expected a number", path=path) from None
    if not allow_inf and not np.isfinite(f):
        raise ConfigError("expected a finite number", path=path)
    return f


def parse_config(text, name="scenario"):
    """Parse and validate a scenario document into a Scenario."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")

    plant_doc = _need(doc, "plant", "")
    basis_doc = _need(doc, "basis", "")
    rm_doc = _need(doc, "reference_model", "")
    gains = _need(doc, "gains", "")
    integ = _need(doc, "integrator", "")
    out = doc.get("output", {}) or {}
    ctrl = doc.get("controller", {}) or {}

    seg_docs = _need(plant_doc, "segments", "plant")
    if not isinstance(seg_docs, list) or not seg_docs:
        raise ConfigError("need a non-empty list", path="plant.segments")
    segments = []
    for k, sd in enumerate(seg_docs):
        path = f"plant.segments[{k}]"
        try:
            segments.append(
                PlantSegment(
                    A=_matrix(_need(sd, "A", path), f"{path}.A"),
                    B=_matrix(_need(sd, "B", path), f"{path}.B"),
                    theta_unc=_matrix(_need(sd, "theta_unc", path), f"{path}.theta_unc"),
                    t_start=_float(_need(sd, "t_start", path), f"{path}.t_start"),
                )
            )
        except SwitchMracError as exc:
            if isinstance(exc, ConfigError) and exc.path:
                raise
            raise ConfigError(str(exc), path=path) from None

    n = segments[0].n
    try:
        basis = BasisSpec(
            kind=str(_need(basis_doc, "kind", "basis")).replace("-", "_"),
            n=n,
            params={k: v for k, v in basis_doc.items() if k != "kind"},
        )
    except SwitchMracError as exc:
        if isinstance(exc, ConfigError) and exc.path:
            raise
        raise ConfigError(str(exc), path="basis") from None

    try:
        plant = SwitchedPlantSpec(
            segments=tuple(segments),
            x0=_matrix(_need(plant_doc, "x0", "plant"), "plant.x0"),
            basis=basis,
        )
    except SwitchMracError as exc:
        if isinstance(exc, ConfigError) and exc.path:
            raise
        raise ConfigError(str(exc), path="plant") from None

    r_docs = _need(rm_doc, "r", "reference_model")
    if not isinstance(r_docs, list) or not r_docs:
        raise ConfigError("need a non-empty channel list", path="reference_model.r")
    channels = []
    for k, ch in enumerate(r_docs):
        if not isinstance(ch, dict):
            raise ConfigError("each channel must be a mapping", path=f"reference_model.r[{k}]")
        ch = dict(ch)
        ch["kind"] = str(ch.get("kind", "")).replace("-", "_")
        channels.append(ch)
    try:
        rm = ReferenceModelSpec(
            A_ref=_matrix(_need(rm_doc, "A_ref", "reference_model"), "reference_model.A_ref"),
            B_ref=_matrix(_need(rm_doc, "B_ref", "reference_model"), "reference_model.B_ref"),
            x0_ref=_matrix(_need(rm_doc, "x0_ref", "reference_model"), "reference_model.x0_ref"),
            r=ReferenceSignalSpec(channels=tuple(channels)),
        )
    except SwitchMracError as exc:
        if isinstance(exc, ConfigError) and exc.path:
            raise
        raise ConfigError(str(exc), path="reference_model") from None

    m, p = segments[0].m, segments[0].p
    th0 = ctrl.get("theta_hat0")
    if th0 is None:
        th0 = np.zeros((n + m + p, m))
    else:
        th0 = _matrix(th0, "controller.theta_hat0")

    rho_raw = gains.get("rho", "auto")
    rho = None if (isinstance(rho_raw, str) and rho_raw == "auto") else _float(
        rho_raw, "gains.rho"
    )
    if rho is not None and rho <= 0.0:
        raise ConfigError("rho must be positive (or 'auto')", path="gains.rho")

    eps_thr = gains.get("eps_threshold", 1e-4)
    eps_thr = _float(eps_thr, "gains.eps_threshold", allow_inf=True)

    try:
        scn = Scenario(
            plant=plant,
            rm=rm,
            theta_hat0=th0,
            l=_float(_need(gains, "l", "gains"), "gains.l"),
            sigma=_float(_need(gains, "sigma", "gains"), "gains.sigma"),
            delta_pr=_float(_need(gains, "delta_pr", "gains"), "gains.delta_pr"),
            rho=rho,
            rho_auto_scale=_float(gains.get("rho_auto_scale", 1e-120), "gains.rho_auto_scale"),
            rho_auto_horizon=_float(gains.get("rho_auto_horizon", 2.0), "gains.rho_auto_horizon"),
            gamma0=_float(gains.get("gamma0", 1.0), "gains.gamma0"),
            gamma1=_float(gains.get("gamma1", 0.0), "gains.gamma1"),
            eps_threshold=eps_thr,
            arm_ratio=_float(gains.get("arm_ratio", 1e-11), "gains.arm_ratio"),
            adapt_trust=_float(gains.get("adapt_trust", 1e-2), "gains.adapt_trust"),
            immediate_reset=bool(gains.get("immediate_reset", False)),
            detector_on=bool(gains.get("detector_on", True)),
            h=_float(_need(integ, "h", "integrator"), "integrator.h"),
            t_end=_float(_need(integ, "t_end", "integrator"), "integrator.t_end"),
            x_max=_float(integ.get("x_max", 1e6), "integrator.x_max"),
            name=str(doc.get("name", name)),
        )
    except SwitchMracError as exc:
        if isinstance(exc, ConfigError) and exc.path:
            raise
        raise ConfigError(str(exc)) from None

    # Assumption check: every segment must admit ideal gains
    for k, seg in enumerate(plant.segments):
        try:
            ideal_parameters(seg, rm)
        except SwitchMracError as exc:
            raise ConfigError(str(exc), path=f"plant.segments[{k}]") from None

    out_cfg = {
        "decimation": int(out.get("decimation", 1)),
        "csv": out.get("csv"),
        "svg": bool(out.get("svg", False)),
    }
    if out_cfg["decimation"] < 1:
        raise ConfigError("decimation must be >= 1", path="output.decimation")
    return scn, out_cfg


def load_config(path):
    """Read, parse and validate a scenario config file."""
    if path == "canonical":
        path = canonical_path()
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, name=str(path))
