"""
モニタ記録の入出力
monitors.csv（17桁精度、欠損は空欄）と summary.json の読み書き
"""
import csv
import json
import logging
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from services.monitors import COLUMNS, CtFit, MonitorRecord, Slack, Verdict
from utils.errors import InvalidInput

logger = logging.getLogger(__name__)

SUMMARY_VERSION = 1


def format_value(value: Optional[float]) -> str:
    """17有効桁で書く（None は空欄）"""
    if value is None:
        return ""
    return "%.17g" % value


def parse_value(text: str) -> Optional[float]:
    text = text.strip()
    return None if text == "" else float(text)


def write_monitor_csv(records: Sequence[MonitorRecord], path: str | Path) -> Path:
    """
    MonitorRecordをCSVに保存

    Args:
        records: 記録のリスト
        path: 保存先

    Returns:
        保存したパス
    """
    path = Path(path)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(COLUMNS)
        for record in records:
            writer.writerow([format_value(getattr(record, name)) for name in COLUMNS])
    logger.info(f"モニタ記録を保存しました: {path} ({len(records)}行)")
    return path


def read_monitor_csv(path: str | Path) -> List[MonitorRecord]:
    """
    monitors.csv を読み込む

    Raises:
        InvalidInput: ヘッダや値が不正
    """
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"ファイルが存在しません: {path}")

    with open(path, 'r', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != COLUMNS:
            raise InvalidInput(f"monitors.csv のヘッダが不正です: {reader.fieldnames}")
        records = []
        for line, row in enumerate(reader, start=2):
            try:
                values = {name: parse_value(row[name]) for name in COLUMNS}
            except (TypeError, ValueError) as e:
                raise InvalidInput(f"{path}:{line} の値が不正です: {e}") from e
            if values['t'] is None:
                raise InvalidInput(f"{path}:{line} に時刻がありません")
            records.append(MonitorRecord(**values))
    return records


def build_summary(termination: str, message: str, steps: int, t_final: float,
                  predicted: Sequence[str], verdicts: Dict[str, Verdict], slacks: Dict[str, Slack],
                  fit: Optional[CtFit] = None, violated: Sequence[str] = (),
                  extra: Optional[dict] = None) -> dict:
    """summary.json の内容を組み立てる"""
    summary = {
        "version": SUMMARY_VERSION,
        "created": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
        "termination": termination,
        "message": message,
        "steps": steps,
        "t_final": t_final,
        "predicted": list(predicted),
        "slacks": {name: asdict(slack) for name, slack in slacks.items()},
        "verdicts": {name: asdict(v) for name, v in verdicts.items()},
        "ct_fit": asdict(fit) if fit is not None else None,
        "violations": list(violated),
    }
    if extra:
        summary.update(extra)
    return summary


def write_summary(summary: dict, path: str | Path) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, ensure_ascii=False, indent=2)
    logger.info(f"サマリを保存しました: {path}")
    return path


def read_summary(path: str | Path) -> dict:
    """
    summary.json を読み込む

    Raises:
        InvalidInput: JSONとして読めない、または必須キーがない
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            summary = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInput(f"サマリの読み込みに失敗: {path} - {e}") from e
    for key in ("predicted", "slacks", "verdicts"):
        if key not in summary:
            raise InvalidInput(f"サマリに {key} がありません: {path}")
    return summary


def slacks_from_summary(summary: dict) -> Dict[str, Slack]:
    return {name: Slack(**values) for name, values in summary.get("slacks", {}).items()}
