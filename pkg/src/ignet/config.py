"""Line-based run configuration: ``section.key = value`` pairs.

The format covers the network (explicit layers or a preset), the loss, input
dims, per-layer initialization amplitudes, optimizer, cross-validation,
augmentation, the one-hot encoder groups, and the diagnostic window.  See the
README for the full key reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import AugmentConfig, EncoderSpec
from .errors import ConfigError
from .initdiag import DEFAULT_WINDOW, InitAmplitudes
from .net import (
    Activation,
    ConvSpec,
    DenseSpec,
    Loss,
    PoolSpec,
    SoftmaxSpec,
    build_network,
)
from .optimize import OptimizerConfig
from .tensor import ConvGeometry
from .train import CvConfig

AUTO_UNITS = "auto"


@dataclass
class Settings:
    layer_defs: list = field(default_factory=list)  # raw per-layer key dicts
    preset: str | None = None
    preset_options: dict = field(default_factory=dict)
    loss: Loss = Loss.MSE
    input_dims: tuple = (1, 36, 58)
    amplitudes: dict = field(default_factory=dict)  # ordinal -> [W, B]
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    encoder: EncoderSpec = field(
        default_factory=lambda: EncoderSpec(("age_category",))
    )
    diag_window: tuple = DEFAULT_WINDOW


def _parse_bool(value: str, where: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {value!r}")


def _parse_pair(value: str, where: str) -> tuple:
    parts = value.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"{where}: expected VxH, got {value!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"{where}: expected VxH integers, got {value!r}") from exc


def _num(cast, value: str, where: str):
    try:
        return cast(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad number {value!r}") from exc


def parse_config(text: str) -> Settings:
    """Parse config text; unknown keys and malformed values raise ConfigError."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        pairs.append((lineno, key.strip().lower(), value.strip()))

    s = Settings()
    layer_keys: dict[int, dict] = {}
    opt_kw: dict = {}
    cv_kw: dict = {}
    aug_kw: dict = {}
    diag = dict(low=DEFAULT_WINDOW[0], high=DEFAULT_WINDOW[1])
    input_kw = dict(channels=1, rows=36, cols=58)

    for lineno, key, value in pairs:
        where = f"line {lineno} ({key})"
        parts = key.split(".")
        if key == "loss":
            try:
                s.loss = Loss(value.lower())
            except ValueError:
                raise ConfigError(f"{where}: unknown loss {value!r}")
        elif key == "preset":
            s.preset = value.lower()
        elif parts[0] == "preset" and len(parts) == 2:
            s.preset_options[parts[1]] = value
        elif parts[0] == "layer" and len(parts) == 3:
            idx = _num(int, parts[1], where)
            layer_keys.setdefault(idx, {})[parts[2]] = (value, where)
        elif parts[0] == "input" and len(parts) == 2 and parts[1] in input_kw:
            input_kw[parts[1]] = _num(int, value, where)
        elif parts[0] == "init" and len(parts) == 3 and parts[2] in ("w", "b"):
            ordinal = _num(int, parts[1], where)
            pair = s.amplitudes.setdefault(ordinal, [1.0, 0.0])
            pair[0 if parts[2] == "w" else 1] = _num(float, value, where)
        elif parts[0] == "opt" and len(parts) == 2:
            opt_kw[parts[1]] = (value, where)
        elif parts[0] == "cv" and len(parts) == 2:
            cv_kw[parts[1]] = (value, where)
        elif parts[0] == "augment" and len(parts) == 2:
            aug_kw[parts[1]] = (value, where)
        elif key == "encoder.groups":
            groups = tuple(g.strip() for g in value.split(",") if g.strip())
            try:
                s.encoder = EncoderSpec(groups)
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
        elif parts[0] == "diag" and len(parts) == 2 and parts[1] in diag:
            diag[parts[1]] = _num(float, value, where)
        else:
            raise ConfigError(f"{where}: unknown key")

    s.input_dims = (input_kw["channels"], input_kw["rows"], input_kw["cols"])
    s.diag_window = (diag["low"], diag["high"])
    s.optimizer = _build_optimizer(opt_kw)
    s.cv = _build_cv(cv_kw)
    s.augment = _build_augment(aug_kw)
    if s.preset and layer_keys:
        raise ConfigError("give either a preset or explicit layer.* keys, not both")
    if layer_keys:
        s.layer_defs = _build_layer_defs(layer_keys)
    return s


def load_config(path) -> Settings:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _build_optimizer(kw) -> OptimizerConfig:
    out = {}
    for key, (value, where) in kw.items():
        if key == "kind":
            out["kind"] = value.lower()
        elif key == "learning_rate":
            out["learning_rate"] = _num(float, value, where)
        elif key == "momentum":
            out["momentum_coeff"] = _num(float, value, where)
        elif key == "batch_size":
            out["batch_size"] = _num(int, value, where)
        else:
            raise ConfigError(f"{where}: unknown optimizer key")
    try:
        return OptimizerConfig(**out)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_cv(kw) -> CvConfig:
    out = {}
    for key, (value, where) in kw.items():
        if key == "folds":
            out["folds"] = _num(int, value, where)
        elif key == "repeats":
            out["repeats_per_fold"] = _num(int, value, where)
        elif key == "tolerance":
            out["tolerance"] = _num(int, value, where)
        elif key == "validation_fraction":
            out["validation_fraction"] = _num(float, value, where)
        else:
            raise ConfigError(f"{where}: unknown cv key")
    try:
        return CvConfig(**out)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_augment(kw) -> AugmentConfig:
    out = {}
    fields = dict(multiplier=int, rotation_max_deg=float, stretch_min=float,
                  stretch_max=float, noise_level=float, noise_fraction=float)
    for key, (value, where) in kw.items():
        if key not in fields:
            raise ConfigError(f"{where}: unknown augment key")
        out[key] = _num(fields[key], value, where)
    try:
        return AugmentConfig(**out)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_layer_defs(layer_keys) -> list:
    indices = sorted(layer_keys)
    if indices != list(range(1, len(indices) + 1)):
        raise ConfigError(f"layer indices must be 1..N contiguous, got {indices}")
    return [layer_keys[i] for i in indices]


def _activation(value: str, where: str) -> Activation:
    try:
        return Activation(value.lower())
    except ValueError:
        raise ConfigError(f"{where}: unknown activation {value!r}")


def _layer_spec(defn: dict, pos: int):
    first_where = next(iter(defn.values()))[1]
    kind_entry = defn.pop("kind", None)
    if kind_entry is None:
        raise ConfigError(f"{first_where}: layer {pos} has no kind")
    kind = kind_entry[0].lower()
    taken = dict(defn)

    def grab(name, default=None):
        return taken.pop(name, (default, None))

    if kind == "softmax":
        spec = SoftmaxSpec()
    elif kind == "maxpool":
        wv, wh = _parse_pair(*_require(grab("window"), pos, "window"))
        stride, sw = grab("stride")
        sv, sh = _parse_pair(stride, sw) if stride else (wv, wh)
        drop, dw = grab("dropout", "0")
        spec = PoolSpec(wv, wh, sv, sh, _num(float, drop, dw or "dropout"))
    elif kind in ("conv", "dense"):
        act, aw = grab("activation", "identity")
        blearn, blw = grab("bias_learning", "true")
        drop, dw = grab("dropout", "0")
        dconn, dcw = grab("dropconnect", "0")
        fconn, fcw = grab("freezeconnect", "0")
        fres, _ = grab("freezeconnect_resample", "per_run")
        common = dict(
            activation=_activation(act, aw or "activation"),
            bias_learning=_parse_bool(blearn, blw or "bias_learning"),
            dropout=_num(float, drop, dw or "dropout"),
            dropconnect=_num(float, dconn, dcw or "dropconnect"),
            freezeconnect=_num(float, fconn, fcw or "freezeconnect"),
            freeze_resample=fres.lower(),
        )
        if kind == "dense":
            units, uw = _require(grab("units"), pos, "units")
            resolved = -1 if units.lower() == AUTO_UNITS else _num(int, units, uw)
            spec = DenseSpec(units=resolved, **common)
        else:
            filters, fw = _require(grab("filters"), pos, "filters")
            filt, fiw = _require(grab("filter"), pos, "filter")
            fv, fh = _parse_pair(filt, fiw)
            stride, sw = grab("stride")
            sv, sh = _parse_pair(stride, sw) if stride else (1, 1)
            pad, pw = grab("pad")
            pv, ph = _parse_pair(pad, pw) if pad else (0, 0)
            ipad, ipw = grab("input_pad", "0")
            spec = ConvSpec(
                filters=_num(int, filters, fw),
                filter_v=fv, filter_h=fh,
                geom=ConvGeometry(sv, sh, pv, ph,
                                  _num(int, ipad, ipw or "input_pad")),
                **common,
            )
    else:
        raise ConfigError(f"layer {pos}: unknown kind {kind!r}")
    if taken:
        leftover = ", ".join(f"{k} ({w})" for k, (_, w) in taken.items())
        raise ConfigError(f"layer {pos}: unknown keys: {leftover}")
    return spec


def _require(entry, pos, name):
    value, where = entry
    if value is None:
        raise ConfigError(f"layer {pos}: missing {name}")
    return value, where


def make_layer_specs(settings: Settings, auto_units: int | None = None) -> list:
    """Materialize layer specs, resolving 'auto' dense units.

    ``auto_units`` is the category count (classification) or 1 (regression).
    """
    if settings.preset:
        specs = _preset_specs(settings)
    elif settings.layer_defs:
        specs = [_layer_spec(dict(d), i + 1)
                 for i, d in enumerate(settings.layer_defs)]
    else:
        raise ConfigError("no network: give a preset or layer.* keys")
    for spec in specs:
        if isinstance(spec, DenseSpec) and spec.units == -1:
            if auto_units is None:
                raise ConfigError("dense units 'auto' needs a dataset context")
            spec.units = auto_units
    return specs


def _preset_specs(settings: Settings) -> list:
    opts = settings.preset_options
    where = "preset option"

    def opt_int(name, default):
        return _num(int, opts[name], where) if name in opts else default

    def opt_float(name, default):
        return _num(float, opts[name], where) if name in opts else default

    filt = _parse_pair(opts["filter"], where) if "filter" in opts else (5, 5)
    with_softmax = settings.loss is Loss.CROSS_ENTROPY
    if settings.preset == "shallow":
        # one convolution, one fully connected layer
        specs = [
            ConvSpec(filters=opt_int("filters", 4), filter_v=filt[0],
                     filter_h=filt[1], bias_learning=False),
            DenseSpec(units=opt_int("units", -1), bias_learning=False),
        ]
    elif settings.preset == "deep":
        # seven layers, freezeconnect on the inner convolutions
        rate = opt_float("freezeconnect", 0.5)
        specs = [
            ConvSpec(filters=opt_int("filters", 4), filter_v=3, filter_h=3,
                     bias_learning=False),
            ConvSpec(filters=6, filter_v=3, filter_h=3, bias_learning=False,
                     freezeconnect=rate),
            PoolSpec(2, 2),
            ConvSpec(filters=8, filter_v=3, filter_h=3, bias_learning=False,
                     freezeconnect=rate),
            ConvSpec(filters=6, filter_v=3, filter_h=3, bias_learning=False,
                     freezeconnect=rate),
            DenseSpec(units=opt_int("hidden_units", 16), bias_learning=False),
            DenseSpec(units=opt_int("units", -1), bias_learning=False),
        ]
    else:
        raise ConfigError(f"unknown preset {settings.preset!r}")
    if with_softmax:
        specs.append(SoftmaxSpec())
    return specs


def make_amplitudes(settings: Settings, param_layer_count: int) -> InitAmplitudes:
    """Amplitude pairs per parameterized layer; unset layers get (1, 0)."""
    pairs = []
    for ordinal in range(1, param_layer_count + 1):
        pairs.append(tuple(settings.amplitudes.get(ordinal, (1.0, 0.0))))
    extra = [o for o in settings.amplitudes if o > param_layer_count]
    if extra:
        raise ConfigError(
            f"init amplitudes given for nonexistent layers {sorted(extra)}"
        )
    return InitAmplitudes(pairs)


def build_from_settings(settings: Settings, auto_units: int | None = None):
    """(network, amplitudes) ready for initialization."""
    specs = make_layer_specs(settings, auto_units)
    net = build_network(specs, settings.loss, settings.input_dims)
    amps = make_amplitudes(settings, len(net.param_layers()))
    return net, amps
