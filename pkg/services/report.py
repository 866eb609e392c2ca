"""
report サブコマンド
monitors.csv からモニタごとのプロット用データ（t 値の2列）を書き出し、
単調性判定を再計算して summary.json と突き合わせる
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence

from services.monitors import COLUMNS, DEFAULT_SLACKS, MonitorRecord, monotonicity_verdicts
from services.records import read_monitor_csv, read_summary, slacks_from_summary
from utils.errors import InvalidInput
from utils.pathsafe import ensure_directory, output_path

logger = logging.getLogger(__name__)

PLOTTED = [name for name in COLUMNS if name != "t"]


def write_plot_data(records: Sequence[MonitorRecord], outdir: str | Path) -> List[Path]:
    """
    モニタごとに "t 値" の2列テキストを書き出す（値のない列は省略）

    Returns:
        書き出したパスのリスト
    """
    outdir = Path(outdir)
    if not ensure_directory(outdir):
        raise InvalidInput(f"出力フォルダを作成できません: {outdir}")
    written = []
    for name in PLOTTED:
        rows = [(r.t, getattr(r, name)) for r in records if getattr(r, name) is not None]
        if not rows:
            continue
        path = output_path(outdir, name, ".dat")
        with open(path, 'w', encoding='utf-8') as f:
            f.write(f"# t {name}\n")
            for t, value in rows:
                f.write(f"{t:.17g} {value:.17g}\n")
        written.append(path)
    return written


def render_plots(records: Sequence[MonitorRecord], outdir: str | Path) -> List[Path]:
    """モニタごとのPNGグラフ（matplotlib、Aggバックエンド）"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    ensure_directory(outdir)
    written = []
    for name in PLOTTED:
        rows = [(r.t, getattr(r, name)) for r in records if getattr(r, name) is not None]
        if not rows:
            continue
        ts, values = zip(*rows)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(ts, values, marker='o', markersize=2, linewidth=1)
        ax.set_xlabel("t")
        ax.set_ylabel(name)
        ax.set_title(name)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = output_path(outdir, name, ".png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written


def build_report(input_path: str | Path, outdir: str | Path, summary_path: Optional[str | Path] = None,
                 plots: bool = False) -> dict:
    """
    プロット用データを書き出し、判定を再計算する

    Args:
        input_path: monitors.csv
        outdir: 出力フォルダ
        summary_path: summary.json（省略時は monitors.csv と同じフォルダを探す）
        plots: True ならPNGグラフも描く

    Returns:
        結果の辞書 {'written': List[Path], 'verdicts': dict, 'mismatches': List[str], 'errors': List[str]}
    """
    result = {
        'written': [],
        'verdicts': {},
        'mismatches': [],
        'errors': []
    }

    records = read_monitor_csv(input_path)
    result['written'].extend(write_plot_data(records, outdir))

    if summary_path is None:
        candidate = Path(input_path).parent / "summary.json"
        summary_path = candidate if candidate.exists() else None

    summary = None
    if summary_path is not None:
        summary = read_summary(summary_path)
        predicted = summary["predicted"]
        slacks = slacks_from_summary(summary) or DEFAULT_SLACKS
    else:
        logger.warning("summary.json がないため既定の許容幅で判定します")
        predicted = []
        slacks = DEFAULT_SLACKS

    verdicts = monotonicity_verdicts(records, predicted, slacks)
    result['verdicts'] = verdicts

    if summary is not None:
        recorded = summary["verdicts"]
        for name, verdict in verdicts.items():
            if name not in recorded:
                result['mismatches'].append(f"{name}: サマリにない判定です")
            elif bool(recorded[name]["holds"]) != verdict.holds:
                result['mismatches'].append(f"{name}: サマリ {recorded[name]['holds']} / 再計算 {verdict.holds}")
        for name in recorded:
            if name not in verdicts:
                result['mismatches'].append(f"{name}: 再計算で判定できません")

    if plots:
        try:
            result['written'].extend(render_plots(records, outdir))
        except Exception as e:
            error_msg = f"グラフ描画エラー: {e}"
            result['errors'].append(error_msg)
            logger.error(error_msg)

    for message in result['mismatches']:
        logger.warning(f"判定の不一致: {message}")
    logger.info(f"レポートを書き出しました: {outdir} ({len(result['written'])}ファイル)")
    return result
