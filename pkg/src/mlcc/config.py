"""Run configuration: a sectioned ``key = value`` file, one section per module.

Example::

    [model]
    kind = mlcc

    [schema]
    n_fields = 16
    buckets = 100
    embedding_dim = 8

    [plc]
    heads = 4
    widths = 8, 8, 4
    activation = relu

    [channels]
    channels = 1
    refined_dim = 8          ; "none" disables the local compressor

    [readout]
    hidden = 64

    [train]
    lr = 0.005
    batch_size = 256
    epochs = 4
    seed = 0

    [data]
    source = synthetic       ; or csv, with path = ...

    [synthetic]
    n_rows = 20000
    latent_dim = 2
    pairs = 0-1, 2-3
    triples = 4-5-6

    [output]
    dir = runs/example
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import SyntheticSpec, default_interactions
from .embedding import FeatureSchema
from .errors import ConfigError
from .interaction import PlcConfig
from .models import ModelConfig
from .training import TrainConfig

SECTIONS = ("model", "schema", "plc", "channels", "readout", "train", "data", "synthetic", "output")


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    split: tuple[float, float, float] = (0.90, 0.01, 0.09)
    split_seed: int = 0
    source: str = "synthetic"
    csv_path: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    out_dir: str = "runs/default"

    def with_seed(self, seed: int) -> "RunConfig":
        """Override every seed in the config."""
        seed = int(seed)
        return replace(self, train=replace(self.train, seed=seed), split_seed=seed,
                       synthetic=replace(self.synthetic, seed=seed))

    def to_text(self) -> str:
        """Canonical text form; parsing it back yields an equal config."""
        m, s = self.model, self.model.schema
        cp = configparser.ConfigParser(interpolation=None)
        cp["model"] = {"kind": m.kind}
        cp["schema"] = {
            "fields": ", ".join(s.field_names),
            "buckets": ", ".join(str(b) for b in s.hash_buckets),
            "embedding_dim": str(s.embedding_dim),
        }
        if m.plc is not None:
            cp["plc"] = {
                "heads": str(m.plc.heads),
                "widths": ", ".join(str(w) for w in m.plc.widths),
                "activation": m.plc.activation,
                "include_original": str(m.plc.include_original).lower(),
            }
        cp["channels"] = {
            "channels": str(s.channels),
            "refined_dim": "none" if m.refined_dim is None else str(m.refined_dim),
        }
        cp["readout"] = {"hidden": ", ".join(str(h) for h in m.readout_hidden),
                         "activation": m.readout_activation}
        cp["train"] = {f.name: _fmt(getattr(self.train, f.name)) for f in fields(TrainConfig)}
        cp["train"]["split"] = ", ".join(repr(r) for r in self.split)
        cp["train"]["split_seed"] = str(self.split_seed)
        cp["data"] = {"source": self.source}
        if self.csv_path is not None:
            cp["data"]["path"] = self.csv_path
        sy = self.synthetic
        cp["synthetic"] = {
            "n_fields": str(sy.n_fields), "vocab": str(sy.vocab), "latent_dim": str(sy.latent_dim),
            "pairs": ", ".join("-".join(map(str, p)) for p in sy.pairs),
            "triples": ", ".join("-".join(map(str, t)) for t in sy.triples),
            "alpha": repr(sy.alpha), "beta": repr(sy.beta), "bias": repr(sy.bias),
            "noise": repr(sy.noise), "n_rows": str(sy.n_rows), "seed": str(sy.seed),
        }
        cp["output"] = {"dir": self.out_dir}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp

    def has(self, section: str, key: str) -> bool:
        return self.cp.has_option(section, key)

    def raw(self, section: str, key: str, default=None):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if default is ConfigError:
            raise ConfigError(f"{section}.{key}", "missing")
        return default

    def int(self, section, key, default=ConfigError):
        v = self.raw(section, key, default)
        if not isinstance(v, str):
            return v
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected an integer, got {v!r}") from None

    def float(self, section, key, default=ConfigError):
        v = self.raw(section, key, default)
        if not isinstance(v, str):
            return v
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected a number, got {v!r}") from None

    def bool(self, section, key, default=ConfigError):
        v = self.raw(section, key, default)
        if not isinstance(v, str):
            return v
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key}", f"expected true/false, got {v!r}")

    def ints(self, section, key, default=ConfigError) -> list[int] | None:
        v = self.raw(section, key, default)
        if not isinstance(v, str):
            return v
        try:
            return [int(p) for p in v.split(",") if p.strip()]
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected comma-separated integers, got {v!r}") from None

    def tuples(self, section, key, arity) -> list[tuple[int, ...]]:
        v = self.raw(section, key, "")
        out = []
        for part in v.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                t = tuple(int(x) for x in part.split("-"))
            except ValueError:
                raise ConfigError(f"{section}.{key}", f"bad tuple {part!r}") from None
            if len(t) != arity:
                raise ConfigError(f"{section}.{key}", f"{part!r} should have {arity} members")
            out.append(t)
        return out


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(sec, f"unknown section; expected one of {SECTIONS}")
    r = _Reader(cp)

    kind = r.raw("model", "kind", "mlcc")
    channels = r.int("channels", "channels", 1)
    e = r.int("schema", "embedding_dim")
    if r.has("schema", "fields"):
        names = [p.strip() for p in r.raw("schema", "fields").split(",") if p.strip()]
    else:
        n = r.int("schema", "n_fields", None)
        if n is None:
            n = r.int("synthetic", "n_fields", ConfigError) if r.has("synthetic", "n_fields") else None
        if n is None:
            raise ConfigError("schema.n_fields", "missing (or give schema.fields)")
        names = [f"f{i + 1}" for i in range(n)]
    buckets = r.ints("schema", "buckets")
    if len(buckets) == 1:
        buckets = buckets * len(names)
    schema = FeatureSchema(names, buckets, e, channels)

    plc = None
    if cp.has_section("plc") and kind != "dnn":
        widths = r.ints("plc", "widths")
        if not widths:
            raise ConfigError("plc.widths", "missing")
        if widths[0] != e:
            raise ConfigError("plc.widths", f"e_0 = {widths[0]} must equal schema.embedding_dim = {e}")
        plc = PlcConfig(r.int("plc", "heads"), tuple(widths), r.raw("plc", "activation", "relu"),
                        r.bool("plc", "include_original", True))
    refined = r.raw("channels", "refined_dim", "none")
    if refined.lower() == "none":
        refined_dim = None
    else:
        refined_dim = r.int("channels", "refined_dim")
    hidden = r.ints("readout", "hidden", [64])
    model = ModelConfig(kind, schema, plc, refined_dim, tuple(hidden), r.raw("readout", "activation", "relu"))

    kw = {}
    for f in fields(TrainConfig):
        if r.has("train", f.name):
            conv = {"int": r.int, "float": r.float}.get(f.type, r.raw)
            kw[f.name] = conv("train", f.name)
    tc = TrainConfig(**kw)
    tc.validate()
    split = tuple(float(x) for x in r.raw("train", "split", "0.9, 0.01, 0.09").split(","))
    if len(split) != 3 or any(x <= 0 for x in split) or abs(sum(split) - 1) > 1e-9:
        raise ConfigError("train.split", "three positive ratios summing to 1 required")
    split_seed = r.int("train", "split_seed", tc.seed)

    source = r.raw("data", "source", "synthetic")
    if source not in ("synthetic", "csv"):
        raise ConfigError("data.source", "synthetic or csv")
    csv_path = r.raw("data", "path", None)
    if source == "csv" and not csv_path:
        raise ConfigError("data.path", "required when source = csv")

    n_fields = r.int("synthetic", "n_fields", schema.n_fields)
    pairs = r.tuples("synthetic", "pairs", 2)
    triples = r.tuples("synthetic", "triples", 3)
    if r.has("synthetic", "n_pairs") or r.has("synthetic", "n_triples"):
        pairs, triples = default_interactions(n_fields, r.int("synthetic", "n_pairs", 0),
                                              r.int("synthetic", "n_triples", 0),
                                              r.int("synthetic", "interaction_seed", 0))
    syn = SyntheticSpec(
        n_fields=n_fields,
        vocab=r.int("synthetic", "vocab", 100),
        latent_dim=r.int("synthetic", "latent_dim", 4),
        pairs=pairs, triples=triples,
        alpha=r.float("synthetic", "alpha", 1.0),
        beta=r.float("synthetic", "beta", 1.0),
        bias=r.float("synthetic", "bias", 0.0),
        noise=r.float("synthetic", "noise", 0.0),
        n_rows=r.int("synthetic", "n_rows", 1000),
        seed=r.int("synthetic", "seed", tc.seed),
    )
    syn.validate()
    if source == "synthetic" and syn.n_fields != schema.n_fields:
        raise ConfigError("synthetic.n_fields",
                          f"{syn.n_fields} differs from schema field count {schema.n_fields}")
    return RunConfig(model, tc, split, split_seed, source, csv_path, syn, r.raw("output", "dir", "runs/default"))


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
