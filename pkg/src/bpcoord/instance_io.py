"""JSON (de)serialization of problem instances.

The document carries the candidate sets, the sparse mixing entries in
row-major form, and a utility-model tag with enough parameters to rebuild
the per-link evaluators.  Used by the CLI and by golden-file tests.
"""
from __future__ import annotations

import json

import numpy as np

from .core import InterferenceSystem, SchedulingSet
from .errors import ConfigurationError
from .utility import RateModel, RateUtility, UtilitySpec


def system_to_dict(system: InterferenceSystem) -> dict:
    models = []
    for util in system.utilities:
        model = getattr(util, "rate_model", None)
        if model is None:
            raise ConfigurationError(
                "only rate-model utilities can be serialized to the instance format"
            )
        models.append({
            "gains": np.asarray(model.gains).tolist(),
            "noise_w": model.noise_w,
            "bandwidth_hz": model.bandwidth_hz,
            "lifted": model.lifted,
            "cap_bps_hz": model.cap_bps_hz,
        })
    spec = system.utilities[0].spec
    utility = {"kind": spec.kind, "beta": spec.beta, "rate_models": models}
    if spec.kind == "weighted-rate":
        utility["weights"] = [float(u.weight) for u in system.utilities]
    return {
        "n": system.n,
        "n_x": system.sets[0].n_x,
        "n_z": system.n_z,
        "candidates": [s.candidates.tolist() for s in system.sets],
        "mixing": [
            {"i": i, "j": j, "matrix": np.asarray(mat).ravel().tolist()}
            for (i, j), mat in sorted(system.mixing.items())
        ],
        "utility": utility,
    }


def system_from_dict(doc: dict) -> InterferenceSystem:
    try:
        n = int(doc["n"])
        n_z = int(doc["n_z"])
        sets = [SchedulingSet(np.asarray(c, dtype=float)) for c in doc["candidates"]]
        if len(sets) != n:
            raise ConfigurationError("candidate list length disagrees with n")
        mixing = {}
        for entry in doc.get("mixing", []):
            i, j = int(entry["i"]), int(entry["j"])
            flat = np.asarray(entry["matrix"], dtype=float)
            mixing[(i, j)] = flat.reshape(n_z, sets[j].n_x)
        util_doc = doc["utility"]
        kind = util_doc["kind"]
        beta = float(util_doc.get("beta", 1.0))
        weights = util_doc.get("weights")
        utilities = []
        for link, model_doc in enumerate(util_doc["rate_models"]):
            model = RateModel(
                gains=np.asarray(model_doc["gains"], dtype=float),
                noise_w=float(model_doc["noise_w"]),
                bandwidth_hz=float(model_doc["bandwidth_hz"]),
                lifted=bool(model_doc.get("lifted", False)),
                cap_bps_hz=model_doc.get("cap_bps_hz"),
            )
            weight = 1.0 if weights is None else float(weights[link])
            utilities.append(
                RateUtility(model, UtilitySpec(kind=kind, beta=beta), link=link,
                            weight=weight)
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed instance document: {exc}") from exc
    return InterferenceSystem(sets, mixing, n_z=n_z, utilities=utilities)


def save_instance(system: InterferenceSystem, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(system_to_dict(system), fh, indent=1)


def load_instance(path: str) -> InterferenceSystem:
    with open(path) as fh:
        return system_from_dict(json.load(fh))
