import argparse
import logging
import os
import sys

from src.core.database import DEFAULT_DB, RunLedger
from src.core.errors import VortexLabError
from src.core.experiments import (EXIT_ERROR, EXIT_OK, EXPERIMENTS, load_config, resolve_config,
                                  run)
from src.utils.checkpoint import load_state

logger = logging.getLogger('vortexlab')


def setup_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )


def build_parser():
    parser = argparse.ArgumentParser(prog='vortexlab',
                                     description="格點環面上 vortex 型方程的數值實驗")
    sub = parser.add_subparsers(dest='command', required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"執行 {name} 實驗")
        p.add_argument('--config', help="YAML 設定檔 (省略時全部使用預設值)")
        p.add_argument('--seed', type=int, help="覆寫 solver.seed")
        p.add_argument('--out', help="覆寫 output.dir")
        p.add_argument('--no-ledger', action='store_true', help="不寫入執行紀錄資料庫")
        p.add_argument('-v', '--verbose', action='store_true')
        if name == 'solve-vortex':
            p.add_argument('--resume', help="從 VTXF checkpoint 繼續")

    h = sub.add_parser('history', help="列出或匯出執行紀錄")
    h.add_argument('--ledger', default=DEFAULT_DB)
    h.add_argument('--limit', type=int, default=20)
    h.add_argument('--experiment')
    h.add_argument('--export', help="匯出路徑 (.csv 或 .xlsx)")
    h.add_argument('--backup', help="備份 ledger 到指定路徑")
    h.add_argument('-v', '--verbose', action='store_true')
    return parser


def run_history(args):
    if not os.path.exists(args.ledger):
        logger.warning("⚠️ 找不到 ledger: %s", args.ledger)
        return EXIT_ERROR
    ledger = RunLedger(args.ledger)
    if args.backup:
        ledger.backup(args.backup)
    if args.export:
        ledger.export(args.export, args.limit)
        return EXIT_OK
    df = ledger.history(args.limit, args.experiment)
    if df.empty:
        print("(沒有執行紀錄)")
    else:
        columns = ['run_id', 'experiment', 'verdict', 'exit_code', 'residual', 'wall_time', 'created_at']
        print(df[columns].to_string(index=False))
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    if args.command == 'history':
        return run_history(args)

    try:
        raw = load_config(args.config) if args.config else {}
        config = resolve_config(raw, args.command, args.seed, args.out)
        resume = load_state(args.resume) if getattr(args, 'resume', None) else None
    except VortexLabError as exc:
        logger.error("❌ %s: %s %s", type(exc).__name__, exc.message, exc.details)
        return EXIT_ERROR

    exit_code, report = run(config, resume=resume, ledger=not args.no_ledger)
    if 'error' in report:
        print(f"❌ {report['error']}: {report['message']}", file=sys.stderr)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
