"""
gaussflow - メイン
グラフ型部分多様体の平均曲率流シミュレータと検証ハーネスのコマンドライン
"""
import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from services.config import RunConfig, load_config
from services.field_images import save_field_image
from services.flow import FlowConfig, Termination, run
from services.grassmann import BallParams
from services.identities import run_identity_suite
from services.initial_data import make_initial_state
from services.monitors import HuiskenSettings, MonitorSuite, ct_fit, monotonicity_verdicts, violations
from services.records import build_summary, write_monitor_csv, write_summary
from services.report import build_report
from services.state_io import read_state, write_field_tables, write_state
from services.surface import gauss_data, geometry_snapshot, scalar_fields
from utils.errors import (
    ConfigError, CflCollapse, DegenerateFrame, GaussFlowError, InfeasibleRadius, InvalidInput, NonFiniteState,
    NotSpaceLike,
)
from utils.numerics import Signature, SignatureKind
from utils.pathsafe import ensure_directory

# ロギング設定
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
    datefmt='%H:%M:%S'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (NotSpaceLike, DegenerateFrame, CflCollapse, NonFiniteState)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussflow", description="平均曲率流のシミュレーションと検証")
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="DEBUGログを表示")
    verbosity.add_argument("--quiet", action="store_true", help="WARNING以上のみ表示")

    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="設定ファイルに従ってフローを実行")
    p_run.add_argument("--config", required=True, help="設定JSON")
    p_run.add_argument("--outdir", help="出力フォルダ（設定の output.directory を上書き）")

    p_id = sub.add_parser("identities", parents=[common], help="代数的恒等式のランダム検証")
    p_id.add_argument("--samples", type=int, default=10_000, help="形ごとのサンプル数")
    p_id.add_argument("--seed", type=int, default=0, help="乱数シード")

    p_gauss = sub.add_parser("gauss", parents=[common], help="状態ファイルの各格子点のJordan角を表示")
    p_gauss.add_argument("--state", required=True, help="状態ファイル（ヘッダJSON）")

    p_report = sub.add_parser("report", parents=[common], help="monitors.csv からプロット用データを作成")
    p_report.add_argument("--input", required=True, help="monitors.csv")
    p_report.add_argument("--outdir", required=True, help="出力フォルダ")
    p_report.add_argument("--summary", help="summary.json（省略時は monitors.csv と同じフォルダ）")
    p_report.add_argument("--plots", action="store_true", help="PNGグラフも描く")
    return parser


def _setup_logging(args) -> None:
    root = logging.getLogger()
    if args.verbose:
        root.setLevel(logging.DEBUG)
    elif args.quiet:
        root.setLevel(logging.WARNING)
    else:
        root.setLevel(logging.INFO)


def _initial_radius(state, center) -> float:
    return gauss_data(geometry_snapshot(state), center).radius


def _ball_for(config: RunConfig, initial, sig: Signature) -> Optional[BallParams]:
    """ガウス球のパラメータ（半径の既定値は初期ガウス半径）"""
    center = None if isinstance(config.ball.center, str) else np.asarray(config.ball.center, dtype=float)
    radius = config.ball.radius
    if radius is None:
        radius = _initial_radius(initial, center)
    enabled = config.monitors.enabled or []
    ball = BallParams.for_radius(radius, require_weighted="weighted" in enabled, center=center)
    if not ball.weighted and not sig.is_pseudo:
        logger.warning(f"R₀ = {radius:.6g} ≥ √2π/12 のため重み付きモニタは記録しません")
    return ball


def _write_field_outputs(state, outdir: Path, formats: List[str], label: str) -> None:
    snapshot = geometry_snapshot(state)
    gauss = gauss_data(snapshot)
    fields = scalar_fields(snapshot, gauss)
    if "fields" in formats:
        write_field_tables(fields, state.sizes, state.periods, outdir / "fields", prefix=label)
    if "png" in formats:
        for name in ("norm_B2", "gauss_distance"):
            save_field_image(f"{label}_{name}", fields[name], state.t, outdir / "images")


def command_run(args) -> int:
    """run サブコマンド"""
    try:
        config = load_config(args.config)
    except ConfigError as e:
        logger.error(f"設定エラー: {e}")
        return EXIT_USAGE

    sig = Signature(config.signature.m, config.signature.n, SignatureKind(config.signature.kind))
    init = config.initial
    try:
        initial = make_initial_state(
            sig, config.grid.sizes, config.periods, init.generator,
            representation=config.flow.representation, amplitude=init.amplitude,
            target_radius=init.target_radius, seed=init.seed,
            slope=None if init.slope is None else np.asarray(init.slope), width=init.width, radius=init.radius,
        )
    except InvalidInput as e:
        logger.error(f"初期データエラー: {e}")
        return EXIT_USAGE
    except NUMERICAL_ERRORS as e:
        logger.error(f"初期データが不正です: {e}")
        return EXIT_NUMERICAL

    ball = None
    try:
        ball = _ball_for(config, initial, sig)
    except InfeasibleRadius as e:
        logger.error(f"球半径エラー: {e}")
        return EXIT_USAGE
    except NUMERICAL_ERRORS as e:
        logger.warning(f"初期ガウス半径を測定できません: {e}")

    monitors = config.monitors
    huisken = None
    if monitors.huisken is not None:
        huisken = HuiskenSettings(monitors.huisken.center, monitors.huisken.t0, monitors.huisken.exponent)
    growth = None if monitors.growth is None else (monitors.growth.c_prime, monitors.growth.delta)
    try:
        suite = MonitorSuite(sig, ball=ball, rescaled=config.flow.rescaled, enabled=monitors.enabled,
                             huisken=huisken, growth=growth, dt_probe=monitors.dt_probe)
    except (InvalidInput, InfeasibleRadius) as e:
        logger.error(f"モニタ設定エラー: {e}")
        return EXIT_USAGE

    flow_config = FlowConfig(
        representation=config.flow.representation, stepper=config.flow.stepper,
        cfl_factor=config.flow.cfl_factor, t_end=config.t_end, monitor_every=config.flow.monitor_every,
        rescaled=config.flow.rescaled, ball=ball, seed=init.seed,
    )
    result = run(flow_config, initial, suite)

    predicted = suite.predicted(initial, result.records[0] if result.records else None)
    slacks = config.slacks()
    verdicts = monotonicity_verdicts(result.records, predicted, slacks)
    fit = ct_fit(result.records, config.t_end)
    violated = violations(verdicts)
    if "ct_fit" in predicted and not fit.holds:
        violated.append("ct_fit")
    for name in violated:
        logger.warning(f"単調性が許容幅を超えて破れました: {name}")
    if suite.growth_violations:
        logger.warning(f"成長条件を満たさない記録が {suite.growth_violations} 件あります")

    outdir = Path(args.outdir or config.output.directory)
    if not ensure_directory(outdir):
        logger.error(f"出力フォルダを作成できません: {outdir}")
        return EXIT_USAGE
    formats = config.output.formats
    if "csv" in formats:
        write_monitor_csv(result.records, outdir / "monitors.csv")
    if "json" in formats:
        final = result.final_state
        extra = {
            "signature": {"kind": sig.kind.value, "m": sig.m, "n": sig.n},
            "t_end": config.t_end,
            "ball": None if ball is None else {"radius": ball.radius, "r0": ball.r0,
                                               "epsilon": ball.epsilon, "q": ball.q},
            "final_state": write_state(final, outdir, "final_state").name,
        }
        summary = build_summary(result.termination.value, result.message, result.steps, final.t,
                                predicted, verdicts, slacks, fit, violated, extra)
        write_summary(summary, outdir / "summary.json")

    if "fields" in formats or "png" in formats:
        for label, state in (("initial", initial), ("final", result.final_state)):
            try:
                _write_field_outputs(state, outdir, formats, label)
            except GaussFlowError as e:
                logger.error(f"フィールド出力エラー ({label}): {e}")

    if result.termination is not Termination.REACHED_T_END:
        logger.error(f"数値的に停止しました: {result.termination.value}")
        return EXIT_NUMERICAL
    if violated:
        return EXIT_VIOLATION
    return EXIT_OK


def command_identities(args) -> int:
    """identities サブコマンド"""
    if args.samples < 1:
        logger.error(f"--samples は1以上です: {args.samples}")
        return EXIT_USAGE
    results = run_identity_suite(samples=args.samples, seed=args.seed)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name} samples={result.samples} violations={result.violations} "
              f"worst_margin={result.worst_margin:.6g}")
        for message in result.errors:
            logger.error(f"{result.name}: {message}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VIOLATION


def command_gauss(args) -> int:
    """gauss サブコマンド"""
    try:
        state = read_state(args.state)
        gauss = gauss_data(geometry_snapshot(state))
    except InvalidInput as e:
        logger.error(f"状態ファイルエラー: {e}")
        return EXIT_USAGE
    except NUMERICAL_ERRORS as e:
        logger.error(f"幾何量を計算できません: {e}")
        return EXIT_NUMERICAL

    m = state.sig.m
    writer = csv.writer(sys.stdout, delimiter='\t', lineterminator='\n')
    writer.writerow([f"i{k + 1}" for k in range(m)] + [f"theta{k + 1}" for k in range(m)] + ["rho", "w"])
    for index in np.ndindex(*state.sizes):
        writer.writerow([str(i) for i in index]
                        + ["%.12g" % a for a in gauss.angles.angles[index]]
                        + ["%.12g" % gauss.distance[index], "%.12g" % gauss.pairing[index]])
    logger.info(f"sup ρ = {gauss.radius:.6g}, 角度の種類: {gauss.angles.kind.value}")
    return EXIT_OK


def command_report(args) -> int:
    """report サブコマンド"""
    try:
        result = build_report(args.input, args.outdir, args.summary, args.plots)
    except InvalidInput as e:
        logger.error(f"レポートエラー: {e}")
        return EXIT_USAGE
    return EXIT_VIOLATION if result['mismatches'] else EXIT_OK


COMMANDS = {
    "run": command_run,
    "identities": command_identities,
    "gauss": command_gauss,
    "report": command_report,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """
    コマンドラインの入口

    Returns:
        終了コード（0 成功、1 単調性の破れ、2 設定・使い方のエラー、3 数値的停止）
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    _setup_logging(args)
    return COMMANDS[args.command](args)


def main():
    """メイン関数"""
    sys.exit(run_cli())


if __name__ == '__main__':
    main()
