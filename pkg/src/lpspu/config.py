"""Run configuration: sectioned ``key = value`` text with presets.

Sections are ``run``, ``data``, ``model``, ``loss``, ``train``, ``select``
and ``sample``. Unknown sections or keys are rejected. :func:`dump_config`
writes the fully resolved configuration, which :func:`load_config` reads
back unchanged.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields

from .objective import Lambda7Controller, LossWeights
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int = 0
    workers: int = 1


@dataclass
class DataSection:
    # moons | circles | blobs | pu-csv | uci | mnist-ovo | mnist-ovr
    kind: str = "moons"
    path: str = ""
    label_column: str = "class"
    missing_token: str = "?"
    drop_missing: bool = False
    n: int = 1000
    noise: float = 0.1
    factor: float = 0.5
    labeled: int = 100
    fraction: float = 0.3
    test_n: int = 500
    classes: str = "0,1"
    n_train: int = 1000
    n_test: int = 500
    margin: float = 0.0
    augment: bool = True


@dataclass
class ModelSection:
    d: int = 4
    bond: int = 2
    skip: int = 4
    repeat: int = 1
    basis: str = "cosine"


@dataclass
class LossSection:
    lam1: float = 4.0
    lam2: float = 4.0
    lam3: float = 1.0
    lam4: float = 2.0
    lam5: float = 2.0
    lam6: float = 1.0
    lam8: float = 4.0
    mu0: float = 5.0
    mu1: float = -50.0
    lam7: float = 1.0
    k_inc: float = 1.1
    k_dec: float = 0.9
    lam7_max: float = 10.0
    lam7_min: float = 0.1
    anneal: float = 0.8


@dataclass
class TrainSection:
    lr: float = 0.01
    epochs: int = 20
    patience: int = 0  # 0 = constant learning rate
    batch_size: int = 0  # 0 = full batch
    resample_labeled: bool = False
    ensemble_size: int = 4


@dataclass
class SelectSection:
    k: int = 2
    metric: str = "f1"
    folds: int = 10
    models_per_cell: int = 10
    # tuning grid: tuples separated by ';', fields as key:value joined by ','
    grid: str = ""


@dataclass
class SampleSection:
    target: str = "positive"
    count: int = 200
    threshold: float = 20.0
    grid: int = 1024
    max_attempts_factor: int = 100


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    train: TrainSection = field(default_factory=TrainSection)
    select: SelectSection = field(default_factory=SelectSection)
    sample: SampleSection = field(default_factory=SampleSection)

    def weights(self) -> LossWeights:
        lo = self.loss
        return LossWeights(lo.lam1, lo.lam2, lo.lam3, lo.lam4, lo.lam5, lo.lam6, lo.lam8, lo.mu0, lo.mu1)

    def controller(self) -> Lambda7Controller:
        lo = self.loss
        return Lambda7Controller(lo.lam7, lo.k_inc, lo.k_dec, lo.lam7_max, lo.lam7_min, lo.anneal)

    def train_config(self) -> TrainConfig:
        t, m = self.train, self.model
        return TrainConfig(
            lr=t.lr, epochs=t.epochs, patience=t.patience or None, batch_size=t.batch_size or None,
            seed=self.run.seed, ensemble_size=t.ensemble_size, resample_labeled=t.resample_labeled,
            d=m.d, bond=m.bond, skip=m.skip, basis=m.basis, weights=self.weights(),
            controller=self.controller(), workers=self.run.workers,
        )

    def grid(self) -> list[dict]:
        return parse_grid(self.select.grid)


def _coerce(raw: str, typ, where: str):
    try:
        if typ in (bool, "bool"):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None


def _apply(cfg: RunConfig, section: str, key: str, raw: str) -> None:
    sec_fields = {f.name: f for f in fields(RunConfig)}
    if section not in sec_fields:
        raise ConfigError(f"unknown section [{section}]")
    sec = getattr(cfg, section)
    own = {f.name: f for f in fields(sec)}
    if key not in own:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    setattr(sec, key, _coerce(raw, own[key].type, f"[{section}] {key}"))


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = _deep_copy(base if base is not None else RunConfig())
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    for section in cp.sections():
        for key, raw in cp.items(section):
            _apply(cfg, section, key, raw)
    validate(cfg)
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read(), base)


def override(cfg: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply ``section.key=value`` strings."""
    cfg = _deep_copy(cfg)
    for a in assignments:
        lhs, sep, raw = a.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {a!r} must look like section.key=value")
        _apply(cfg, section, key, raw)
    validate(cfg)
    return cfg


def _deep_copy(cfg: RunConfig) -> RunConfig:
    return RunConfig(**{f.name: dataclasses.replace(getattr(cfg, f.name)) for f in fields(RunConfig)})


def dump_config(cfg: RunConfig) -> str:
    buf = io.StringIO()
    for f in fields(RunConfig):
        sec = getattr(cfg, f.name)
        buf.write(f"[{f.name}]\n")
        for g in fields(sec):
            v = getattr(sec, g.name)
            buf.write(f"{g.name} = {str(v).lower() if isinstance(v, bool) else v}\n")
        buf.write("\n")
    return buf.getvalue()


def parse_grid(text: str) -> list[dict]:
    """``"d:4,bond:2;d:6,bond:4"`` -> ``[{"d": 4, "bond": 2}, {"d": 6, "bond": 4}]``."""
    types = {"d": int, "bond": int, "skip": int, "repeat": int, "epochs": int, "patience": int, "lr": float}
    out = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        tup = {}
        for item in chunk.split(","):
            k, sep, v = item.partition(":")
            k = k.strip()
            if not sep or k not in types:
                raise ConfigError(f"bad grid entry {item!r}; keys: {sorted(types)}")
            tup[k] = _coerce(v, types[k], f"grid {k}")
        if tup.get("patience") == 0:
            tup["patience"] = None
        out.append(tup)
    return out


DATA_KINDS = ("moons", "circles", "blobs", "pu-csv", "uci", "mnist-ovo", "mnist-ovr")


def validate(cfg: RunConfig) -> None:
    if cfg.data.kind not in DATA_KINDS:
        raise ConfigError(f"[data] kind must be one of {DATA_KINDS}")
    if cfg.model.basis not in ("cosine", "sine", "random"):
        raise ConfigError("[model] basis must be cosine, sine or random")
    if cfg.select.metric not in ("accuracy", "f1"):
        raise ConfigError("[select] metric must be accuracy or f1")
    if cfg.sample.target not in ("positive", "negative"):
        raise ConfigError("[sample] target must be positive or negative")
    if not 0.0 <= cfg.data.margin < 0.5:
        raise ConfigError("[data] margin must be in [0, 0.5)")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    parse_grid(cfg.select.grid)


# --- presets --------------------------------------------------------------


@dataclass(frozen=True)
class UciPreset:
    n_pos: int
    n_neg: int
    attrs: int
    repeat: int
    skip: int
    d: int
    bond: int
    lr: float
    epochs: int
    patience: int  # 0 = constant learning rate


# Dataset characteristics and tuned hyperparameters of the 15 categorical tasks.
UCI_PRESETS: dict[str, UciPreset] = {
    "audiology": UciPreset(57, 48, 40, 1, 10, 12, 12, 0.01, 210, 70),
    "breast-cancer": UciPreset(196, 81, 9, 2, 6, 12, 20, 0.1, 10, 0),
    "chess": UciPreset(1669, 1527, 36, 2, 4, 20, 6, 0.01, 400, 100),
    "credit-a": UciPreset(357, 296, 15, 1, 5, 12, 12, 0.01, 50, 0),
    "dermatology": UciPreset(111, 71, 34, 1, 11, 4, 2, 0.1, 20, 0),
    "heart-c": UciPreset(160, 160, 13, 2, 4, 12, 12, 0.01, 50, 0),
    "hepatitis": UciPreset(123, 32, 19, 1, 4, 12, 12, 0.01, 210, 70),
    "iris": UciPreset(50, 50, 4, 2, 4, 4, 2, 0.1, 20, 0),
    "lymph": UciPreset(81, 61, 18, 3, 4, 12, 6, 0.1, 150, 50),
    "mushroom": UciPreset(3488, 2156, 22, 2, 7, 12, 6, 0.01, 150, 50),
    "nursery": UciPreset(4319, 4266, 8, 2, 4, 20, 6, 0.1, 400, 100),
    "pima": UciPreset(500, 268, 8, 2, 4, 12, 12, 0.01, 210, 70),
    "soybean": UciPreset(92, 91, 21, 1, 7, 20, 6, 0.01, 400, 100),
    "spambase": UciPreset(2788, 1813, 57, 2, 10, 12, 12, 0.01, 210, 70),
    "vote": UciPreset(124, 108, 16, 2, 4, 20, 6, 0.1, 400, 100),
}

# datasets whose published class counts correspond to dropping incomplete rows
DROP_MISSING = {"breast-cancer", "vote"}


def uci_preset(name: str, fraction: float = 0.3, path: str | None = None) -> RunConfig:
    if name not in UCI_PRESETS:
        raise ConfigError(f"unknown dataset preset {name!r}; known: {sorted(UCI_PRESETS)}")
    p = UCI_PRESETS[name]
    cfg = RunConfig()
    cfg.data = DataSection(kind="uci", path=path or f"data/uci/{name}.csv", fraction=fraction,
                           drop_missing=name in DROP_MISSING)
    cfg.model = ModelSection(d=p.d, bond=p.bond, skip=p.skip, repeat=p.repeat, basis="cosine")
    cfg.train = TrainSection(lr=p.lr, epochs=p.epochs, patience=p.patience, ensemble_size=4)
    cfg.select = SelectSection(metric="f1")
    return cfg


def moons_preset() -> RunConfig:
    cfg = RunConfig()
    cfg.data = DataSection(kind="moons", n=1000, noise=0.1, labeled=100, test_n=500, margin=0.05)
    cfg.model = ModelSection(d=12, bond=12, skip=3, repeat=9, basis="random")
    cfg.train = TrainSection(lr=0.1, epochs=30, ensemble_size=4)
    cfg.select = SelectSection(metric="accuracy")
    return cfg


def mnist_preset(classes: str = "0,1", n_labeled: int = 100) -> RunConfig:
    cfg = RunConfig()
    cfg.data = DataSection(kind="mnist-ovo", path="data/mnist", classes=classes, labeled=n_labeled,
                           n_train=1000, n_test=500)
    cfg.model = ModelSection(d=6, bond=20, skip=10, repeat=1, basis="cosine")
    cfg.train = TrainSection(lr=0.01, epochs=25, batch_size=256, resample_labeled=True, ensemble_size=2)
    cfg.select = SelectSection(metric="accuracy")
    return cfg


PRESETS = {"moons": moons_preset, "mnist": mnist_preset, **{k: (lambda k=k: uci_preset(k)) for k in UCI_PRESETS}}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name]()
