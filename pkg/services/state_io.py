"""
状態ファイルの入出力
<name>.json（ヘッダ）と <name>.csv（格子点テーブル）の組で保存する
"""
import csv
import json
import logging
from pathlib import Path
from typing import Dict

import numpy as np

from services.surface import GRAPH, PARAMETRIC, GraphState, ParametricState, grid_coordinates
from utils.errors import InvalidInput
from utils.numerics import Signature, SignatureKind
from utils.pathsafe import ensure_directory, sanitize_filename

logger = logging.getLogger(__name__)

STATE_FORMAT = "gaussflow-state"
STATE_VERSION = 1


def _fmt(value: float) -> str:
    return "%.17g" % value


def write_state(state, directory: str | Path, name: str = "state") -> Path:
    """
    状態を保存する

    ヘッダには kind, m, n, 表現, 格子, 時刻, 定数勾配（または周期格子）とテーブル名を書く。
    テーブルは格子添字 i1..im と値の列（グラフは phi1..phin、パラメトリックは P1..P(m+n)）

    Returns:
        ヘッダJSONのパス
    """
    directory = Path(directory)
    if not ensure_directory(directory):
        raise InvalidInput(f"出力フォルダを作成できません: {directory}")
    name = sanitize_filename(name)
    sig = state.sig
    header = {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "kind": sig.kind.value,
        "m": sig.m,
        "n": sig.n,
        "representation": state.representation,
        "sizes": list(state.sizes),
        "periods": list(state.periods),
        "t": state.t,
        "table": f"{name}.csv",
    }
    if state.representation == GRAPH:
        header["slope"] = state.slope.tolist()
        prefix = "phi"
    else:
        header["lattice"] = state.lattice.tolist()
        prefix = "P"

    values = state.values
    width = values.shape[-1]
    with open(directory / header["table"], 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow([f"i{k + 1}" for k in range(sig.m)] + [f"{prefix}{k + 1}" for k in range(width)])
        for index in np.ndindex(*state.sizes):
            writer.writerow([str(i) for i in index] + [_fmt(v) for v in values[index]])

    header_path = directory / f"{name}.json"
    with open(header_path, 'w', encoding='utf-8') as f:
        json.dump(header, f, ensure_ascii=False, indent=2)
    logger.info(f"状態を保存しました: {header_path}")
    return header_path


def read_state(path: str | Path):
    """
    状態ファイルを読み込む

    Raises:
        InvalidInput: ヘッダ・テーブルが不正
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            header = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInput(f"状態ファイルを読み込めません: {path} - {e}") from e

    if header.get("format") != STATE_FORMAT:
        raise InvalidInput(f"状態ファイルの形式が不正です: {path}")
    try:
        sig = Signature(int(header["m"]), int(header["n"]), SignatureKind(header["kind"]))
        sizes = tuple(int(s) for s in header["sizes"])
        periods = tuple(float(p) for p in header["periods"])
        representation = header["representation"]
        t = float(header.get("t", 0.0))
        table = path.parent / header["table"]
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidInput(f"状態ファイルのヘッダが不正です: {path} - {e}") from e

    if representation not in (GRAPH, PARAMETRIC):
        raise InvalidInput(f"未知の表現です: {representation}")
    width = sig.n if representation == GRAPH else sig.dim
    values = np.full(sizes + (width,), np.nan)
    seen = np.zeros(sizes, dtype=bool)

    try:
        with open(table, 'r', encoding='utf-8') as f:
            reader = csv.reader(f)
            columns = next(reader)
            if len(columns) != sig.m + width:
                raise InvalidInput(f"テーブルの列数が不正です: {len(columns)}")
            for row in reader:
                index = tuple(int(i) for i in row[:sig.m])
                if any(i < 0 for i in index):
                    raise InvalidInput(f"負の格子点インデックスです: {index}")
                values[index] = [float(v) for v in row[sig.m:]]
                seen[index] = True
    except OSError as e:
        raise InvalidInput(f"テーブルを読み込めません: {table} - {e}") from e
    except (IndexError, ValueError, StopIteration) as e:
        raise InvalidInput(f"テーブルの値が不正です: {table} - {e}") from e

    if not np.all(seen):
        raise InvalidInput(f"テーブルに欠けている格子点があります: {table}")

    if representation == GRAPH:
        return GraphState(sig, sizes, periods, values, header.get("slope"), t)
    return ParametricState(sig, sizes, periods, values, header.get("lattice"), t)


def write_field_tables(fields: Dict[str, np.ndarray], sizes, periods, directory: str | Path,
                       prefix: str = "field") -> list:
    """
    スカラー場をフィールドごとのCSV（格子添字、座標、値）に書き出す

    Returns:
        書き出したパスのリスト
    """
    directory = Path(directory)
    ensure_directory(directory)
    coords = grid_coordinates(sizes, periods)
    m = len(sizes)
    written = []
    for name, values in fields.items():
        path = directory / sanitize_filename(f"{prefix}_{name}.csv")
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow([f"i{k + 1}" for k in range(m)] + [f"x{k + 1}" for k in range(m)] + [name])
            for index in np.ndindex(*sizes):
                writer.writerow([str(i) for i in index] + [_fmt(c) for c in coords[index]]
                                + [_fmt(values[index])])
        written.append(path)
    logger.info(f"フィールドを書き出しました: {len(written)} ファイル ({directory})")
    return written
