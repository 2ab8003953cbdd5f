"""Model bundle persistence: manifest.json plus raw little-endian float32 tensors.

Layout of a bundle directory:
    manifest.json   dimensions, vocabulary checksum, hyper-parameters, and an
                    entry (file, shape) per tensor
    <name>.f32      row-major little-endian float32 array per tensor

Round-tripping a bundle through save/load is the identity on the stored
float32 arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gadgets import Gadgets, PairParams, RecurrenceParams
from .inference import ThresholdTable
from .kb import TemporalKB
from .scoring import ModelParams

FORMAT_VERSION = 1


class PersistenceError(Exception):
    pass


class IncompatibleModelError(PersistenceError):
    """Bundle format version does not match this implementation."""


class CorruptModelError(PersistenceError):
    """A tensor file disagrees with its manifest entry."""


_MODEL_KEYS = ("ent_re", "ent_im", "rel_so_re", "rel_so_im", "rel_st_re",
               "rel_st_im", "rel_ot_re", "rel_ot_im", "time_re", "time_im")
_REC_KEYS = ("rec_mu", "rec_sigma", "rec_b", "rec_w")
_PAIR_KEYS = ("pair_sub_mu", "pair_sub_sigma", "pair_sub_b", "pair_sub_w",
              "pair_obj_mu", "pair_obj_sigma", "pair_obj_b", "pair_obj_w")


@dataclass
class ModelBundle:
    """In-memory form of a persisted model: manifest dict plus float32 tensors."""

    manifest: dict
    arrays: dict[str, np.ndarray]

    @classmethod
    def build(cls, model: ModelParams, kb: TemporalKB,
              gadgets: Gadgets | None = None,
              thresholds: ThresholdTable | None = None,
              extra_manifest: dict | None = None) -> "ModelBundle":
        vocab = kb.vocabulary
        arrays = {k: v.astype("<f4") for k, v in model.arrays().items()}
        manifest = {
            "format_version": FORMAT_VERSION,
            "dim": model.dim,
            "n_entities": vocab.n_entities,
            "n_relations": vocab.n_relations,
            "n_base_relations": vocab.n_base_relations,
            "n_instants": vocab.n_instants,
            "granularity": vocab.granularity,
            "min_label": vocab.min_label,
            "max_label": vocab.max_label,
            "vocab_checksum": vocab.checksum(),
            "alpha": model.alpha,
            "beta": model.beta,
            "gamma": model.gamma,
            "has_gadgets": gadgets is not None,
            "has_thresholds": thresholds is not None,
        }
        if gadgets is not None:
            manifest["kappa"] = gadgets.kappa
            manifest["lambda"] = gadgets.lam
            manifest["recurrent_relations"] = np.flatnonzero(
                gadgets.rec.recurrent).tolist()
            arrays.update({
                "rec_mu": gadgets.rec.mu.astype("<f4"),
                "rec_sigma": gadgets.rec.sigma.astype("<f4"),
                "rec_b": gadgets.rec.b.astype("<f4"),
                "rec_w": gadgets.rec.w.astype("<f4"),
                "pair_sub_mu": gadgets.pair.sub_mu.astype("<f4"),
                "pair_sub_sigma": gadgets.pair.sub_sigma.astype("<f4"),
                "pair_sub_b": gadgets.pair.sub_b.astype("<f4"),
                "pair_sub_w": gadgets.pair.sub_w.astype("<f4"),
                "pair_obj_mu": gadgets.pair.obj_mu.astype("<f4"),
                "pair_obj_sigma": gadgets.pair.obj_sigma.astype("<f4"),
                "pair_obj_b": gadgets.pair.obj_b.astype("<f4"),
                "pair_obj_w": gadgets.pair.obj_w.astype("<f4"),
                "pair_sub_has": gadgets.pair.sub_has.astype("<f4"),
                "pair_obj_has": gadgets.pair.obj_has.astype("<f4"),
            })
        if thresholds is not None:
            manifest["threshold_default"] = thresholds.default
            arrays["thresholds"] = thresholds.theta.astype("<f4")
        if extra_manifest:
            manifest.update(extra_manifest)
        return cls(manifest=manifest, arrays=arrays)

    def to_model(self) -> ModelParams:
        m = self.manifest
        return ModelParams(
            **{k: self.arrays[k].astype(np.float64) for k in _MODEL_KEYS},
            alpha=float(m["alpha"]), beta=float(m["beta"]), gamma=float(m["gamma"]),
        )

    def to_gadgets(self) -> Gadgets | None:
        if not self.manifest.get("has_gadgets"):
            return None
        a = self.arrays
        rec = RecurrenceParams(
            mu=a["rec_mu"].astype(np.float64),
            sigma=a["rec_sigma"].astype(np.float64),
            b=a["rec_b"].astype(np.float64),
            w=a["rec_w"].astype(np.float64),
            recurrent=np.isin(np.arange(self.manifest["n_relations"]),
                              self.manifest["recurrent_relations"]),
        )
        pair = PairParams(
            sub_mu=a["pair_sub_mu"].astype(np.float64),
            sub_sigma=a["pair_sub_sigma"].astype(np.float64),
            sub_b=a["pair_sub_b"].astype(np.float64),
            sub_w=a["pair_sub_w"].astype(np.float64),
            sub_has=a["pair_sub_has"].astype(bool),
            obj_mu=a["pair_obj_mu"].astype(np.float64),
            obj_sigma=a["pair_obj_sigma"].astype(np.float64),
            obj_b=a["pair_obj_b"].astype(np.float64),
            obj_w=a["pair_obj_w"].astype(np.float64),
            obj_has=a["pair_obj_has"].astype(bool),
        )
        return Gadgets(rec=rec, pair=pair,
                       kappa=float(self.manifest.get("kappa", 0.0)),
                       lam=float(self.manifest.get("lambda", 0.0)))

    def thresholds(self) -> ThresholdTable | None:
        if not self.manifest.get("has_thresholds"):
            return None
        return ThresholdTable(theta=self.arrays["thresholds"].astype(np.float64),
                              default=float(self.manifest["threshold_default"]))


def save_model(bundle: ModelBundle, path: str | Path) -> None:
    """Write the manifest and one raw float32 file per tensor."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = dict(bundle.manifest)
    manifest["arrays"] = {
        name: {"file": f"{name}.f32", "shape": list(arr.shape)}
        for name, arr in bundle.arrays.items()
    }
    for name, arr in bundle.arrays.items():
        (path / f"{name}.f32").write_bytes(
            np.ascontiguousarray(arr, dtype="<f4").tobytes())
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ModelBundle:
    """Read a bundle directory, validating version and every tensor length."""
    path = Path(path)
    manifest_file = path / "manifest.json"
    if not manifest_file.exists():
        raise PersistenceError(f"no manifest.json under {path}")
    manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise IncompatibleModelError(
            f"bundle format version {version} != supported {FORMAT_VERSION}")
    entries = manifest.pop("arrays", {})
    arrays = {}
    for name, entry in entries.items():
        file = path / entry["file"]
        shape = tuple(entry["shape"])
        expected = int(np.prod(shape)) * 4
        data = file.read_bytes()
        if len(data) != expected:
            raise CorruptModelError(
                f"array {name!r}: file {file.name} holds {len(data)} bytes, "
                f"expected {expected}")
        arrays[name] = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
    return ModelBundle(manifest=manifest, arrays=arrays)
