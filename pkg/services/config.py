"""
ラン設定（JSON）の読み込みと検証
未知のキーはどの階層でもエラーにする
"""
import json
import logging
import math
from dataclasses import MISSING, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union, get_args, get_origin, get_type_hints

from services.flow import REPRESENTATIONS, STEPPERS, flow_time_for
from services.initial_data import GENERATORS
from services.monitors import DEFAULT_SLACKS, MonitorSuite, Slack
from utils.errors import ConfigError
from utils.numerics import SignatureKind

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("csv", "json", "fields", "png")


@dataclass
class SignatureConfig:
    m: int
    n: int
    kind: str = "euclidean"


@dataclass
class GridConfig:
    sizes: List[int]
    periods: Optional[List[float]] = None


@dataclass
class InitialConfig:
    generator: str = "flat"
    amplitude: Optional[float] = None
    target_radius: Optional[float] = None
    seed: int = 0
    slope: Optional[List[List[float]]] = None
    width: Optional[float] = None
    radius: Optional[float] = None


@dataclass
class FlowSection:
    representation: str = "graph"
    stepper: str = "euler"
    cfl_factor: float = 0.5
    t_end: Optional[float] = None
    t_rescaled_end: Optional[float] = None
    monitor_every: int = 10
    rescaled: bool = False


@dataclass
class BallConfig:
    radius: Optional[float] = None
    center: Union[str, List[List[float]]] = "default"


@dataclass
class SlackConfig:
    relative: float = 0.0
    absolute: float = 0.0


@dataclass
class HuiskenConfig:
    center: List[float]
    t0: float
    exponent: Optional[float] = None


@dataclass
class GrowthConfig:
    c_prime: float
    delta: float


@dataclass
class MonitorConfig:
    enabled: Optional[List[str]] = None
    slack: Dict[str, SlackConfig] = field(default_factory=dict)
    huisken: Optional[HuiskenConfig] = None
    growth: Optional[GrowthConfig] = None
    dt_probe: Optional[float] = None


@dataclass
class OutputConfig:
    directory: str = "output"
    formats: List[str] = field(default_factory=lambda: ["csv", "json"])


@dataclass
class RunConfig:
    """ラン設定全体"""
    signature: SignatureConfig
    grid: GridConfig
    initial: InitialConfig = field(default_factory=InitialConfig)
    flow: FlowSection = field(default_factory=FlowSection)
    ball: BallConfig = field(default_factory=BallConfig)
    monitors: MonitorConfig = field(default_factory=MonitorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def periods(self) -> List[float]:
        if self.grid.periods is None:
            return [2.0 * math.pi] * self.signature.m
        return self.grid.periods

    @property
    def t_end(self) -> float:
        if self.flow.t_rescaled_end is not None:
            return flow_time_for(self.flow.t_rescaled_end)
        return self.flow.t_end

    def slacks(self) -> Dict[str, Slack]:
        overrides = {name: Slack(s.relative, s.absolute, DEFAULT_SLACKS[name].reference)
                     for name, s in self.monitors.slack.items()}
        return {**DEFAULT_SLACKS, **overrides}


def _is_optional(tp) -> bool:
    return get_origin(tp) is Union and type(None) in get_args(tp)


def _convert(value, tp, path: str):
    """型ヒントに従って値を変換する（dataclass は再帰）"""
    if _is_optional(tp):
        if value is None:
            return None
        inner = [a for a in get_args(tp) if a is not type(None)]
        return _convert(value, inner[0], path)

    origin = get_origin(tp)
    if origin is Union:
        for option in get_args(tp):
            try:
                return _convert(value, option, path)
            except ConfigError:
                continue
        raise ConfigError(f"{path}: 値の型が不正です: {value!r}")
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: リストが必要です: {value!r}")
        (item_type,) = get_args(tp)
        return [_convert(v, item_type, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin in (dict, Dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: オブジェクトが必要です: {value!r}")
        _, item_type = get_args(tp)
        return {k: _convert(v, item_type, f"{path}.{k}") for k, v in value.items()}
    if is_dataclass(tp):
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: true/false が必要です: {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: 整数が必要です: {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: 数値が必要です: {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: 文字列が必要です: {value!r}")
        return value
    raise ConfigError(f"{path}: 未対応の型です: {tp}")


def _build(cls, data, path: str):
    """辞書から dataclass を作る。未知のキー・必須キーの欠落はエラー"""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: オブジェクトが必要です")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        dotted = ", ".join(f"{path}.{k}" if path else k for k in unknown)
        raise ConfigError(f"未知のキーです: {dotted}")

    kwargs = {}
    for f in fields(cls):
        key_path = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _convert(data[f.name], hints[f.name], key_path)
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError(f"必須キーがありません: {key_path}")
    return cls(**kwargs)


def validate(config: RunConfig) -> RunConfig:
    """値の範囲と名前を検証する"""
    sig = config.signature
    if sig.m < 1 or sig.n < 1:
        raise ConfigError(f"signature: m, n は1以上です: m={sig.m}, n={sig.n}")
    if sig.kind not in [k.value for k in SignatureKind]:
        raise ConfigError(f"signature.kind が不正です: {sig.kind}")

    if len(config.grid.sizes) != sig.m:
        raise ConfigError(f"grid.sizes の長さが m={sig.m} と一致しません")
    if any(s < 3 for s in config.grid.sizes):
        raise ConfigError(f"grid.sizes は3以上です: {config.grid.sizes}")
    if len(config.periods) != sig.m or any(p <= 0 for p in config.periods):
        raise ConfigError(f"grid.periods が不正です: {config.periods}")

    initial = config.initial
    if initial.generator not in GENERATORS:
        raise ConfigError(f"initial.generator が不正です: {initial.generator}")
    if initial.slope is not None and (len(initial.slope) != sig.n or any(len(r) != sig.m for r in initial.slope)):
        raise ConfigError("initial.slope は n×m の行列です")
    if initial.target_radius is not None and initial.target_radius < 0:
        raise ConfigError(f"initial.target_radius は非負です: {initial.target_radius}")

    flow = config.flow
    if flow.representation not in REPRESENTATIONS:
        raise ConfigError(f"flow.representation が不正です: {flow.representation}")
    if flow.stepper not in STEPPERS:
        raise ConfigError(f"flow.stepper が不正です: {flow.stepper}")
    if not 0.0 < flow.cfl_factor <= 1.0:
        raise ConfigError(f"flow.cfl_factor は (0, 1] です: {flow.cfl_factor}")
    if (flow.t_end is None) == (flow.t_rescaled_end is None):
        raise ConfigError("flow.t_end と flow.t_rescaled_end のどちらか一方を指定してください")
    if not config.t_end > 0.0:
        raise ConfigError(f"終了時刻は正です: {config.t_end}")
    if flow.monitor_every < 1:
        raise ConfigError(f"flow.monitor_every は1以上です: {flow.monitor_every}")

    ball = config.ball
    if ball.radius is not None and ball.radius < 0:
        raise ConfigError(f"ball.radius は非負です: {ball.radius}")
    if isinstance(ball.center, str) and ball.center != "default":
        raise ConfigError(f"ball.center は \"default\" または m×(m+n) の行列です: {ball.center}")
    if isinstance(ball.center, list) and (len(ball.center) != sig.m
                                          or any(len(r) != sig.m + sig.n for r in ball.center)):
        raise ConfigError("ball.center は m×(m+n) の行列です")

    monitors = config.monitors
    if monitors.enabled is not None:
        unknown = sorted(set(monitors.enabled) - set(MonitorSuite.ALL))
        if unknown:
            raise ConfigError(f"monitors.enabled に未知のモニタがあります: {unknown}")
    unknown = sorted(set(monitors.slack) - set(DEFAULT_SLACKS))
    if unknown:
        raise ConfigError(f"monitors.slack に未知のモニタがあります: {unknown}")
    for name, s in monitors.slack.items():
        if s.relative < 0 or s.absolute < 0:
            raise ConfigError(f"monitors.slack.{name} は非負です")
    if monitors.huisken is not None:
        if sig.kind != "euclidean":
            raise ConfigError("monitors.huisken はユークリッド符号のみ対応しています")
        if len(monitors.huisken.center) != sig.m + sig.n:
            raise ConfigError("monitors.huisken.center は m+n 成分です")
    if monitors.dt_probe is not None and monitors.dt_probe <= 0:
        raise ConfigError(f"monitors.dt_probe は正です: {monitors.dt_probe}")

    unknown = sorted(set(config.output.formats) - set(OUTPUT_FORMATS))
    if unknown:
        raise ConfigError(f"output.formats が不正です: {unknown}")
    return config


def parse_config(data: dict) -> RunConfig:
    return validate(_build(RunConfig, data, ""))


def load_config(path: str | Path) -> RunConfig:
    """
    設定ファイルを読み込む

    Raises:
        ConfigError: 読み込み・形式・値のエラー
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"設定ファイルを開けません: {path} - {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"設定ファイルがJSONとして不正です: {path} - {e}") from e
    config = parse_config(data)
    logger.info(f"設定を読み込みました: {path}")
    return config
