import hashlib
import json
import logging
import os
import sqlite3
import uuid
from datetime import datetime

import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_DB = 'data/runs.db'


def config_hash(config):
    """完整設定 (排序後的 canonical JSON) 的 sha256"""
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def new_run_id():
    return datetime.now().strftime('%Y%m%d-%H%M%S-') + uuid.uuid4().hex[:6]


class RunLedger:
    """每次執行一列的 SQLite 紀錄 (WAL 模式)"""

    def __init__(self, db_path=None, config=None):
        config = config or {}
        self.db_path = db_path or config.get('output', {}).get('ledger', DEFAULT_DB)
        directory = os.path.dirname(os.path.abspath(self.db_path))
        os.makedirs(directory, exist_ok=True)
        self._init_db()
        self._migrate_db()

    def _get_connection(self):
        conn = sqlite3.connect(self.db_path, timeout=60.0)
        conn.execute('PRAGMA journal_mode=WAL;')  # 掃描中的子程序可同時寫入
        return conn

    def _init_db(self):
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    run_id TEXT PRIMARY KEY,
                    experiment TEXT NOT NULL,
                    config_hash TEXT NOT NULL,
                    verdict TEXT,
                    exit_code INTEGER,
                    residual REAL,
                    wall_time REAL,
                    out_dir TEXT,
                    created_at TIMESTAMP
                )
            ''')
            conn.commit()

    def _migrate_db(self):
        """舊版 ledger 沒有 error / version 欄位"""
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("PRAGMA table_info(runs)")
            columns = [info[1] for info in cursor.fetchall()]
            if 'error' not in columns:
                logger.info("💾 ledger migration: 新增 error 欄位")
                cursor.execute("ALTER TABLE runs ADD COLUMN error TEXT")
            if 'version' not in columns:
                logger.info("💾 ledger migration: 新增 version 欄位")
                cursor.execute("ALTER TABLE runs ADD COLUMN version TEXT")
            conn.commit()

    def record_run(self, run_id, experiment, config, verdict, exit_code, residual=None,
                   wall_time=None, out_dir=None, error=None, version=None):
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT OR REPLACE INTO runs (run_id, experiment, config_hash, verdict, exit_code,
                                             residual, wall_time, out_dir, created_at, error, version)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', (run_id, experiment, config_hash(config), verdict, int(exit_code),
                  None if residual is None else float(residual),
                  None if wall_time is None else float(wall_time),
                  out_dir, datetime.now().isoformat(timespec='seconds'), error, version))
            conn.commit()
        logger.debug("💾 ledger 紀錄 %s (%s, exit=%d)", run_id, experiment, exit_code)
        return run_id

    def history(self, limit=20, experiment=None):
        query = 'SELECT * FROM runs'
        args = []
        if experiment:
            query += ' WHERE experiment = ?'
            args.append(experiment)
        query += ' ORDER BY created_at DESC, rowid DESC'
        if limit:
            query += ' LIMIT ?'
            args.append(int(limit))
        with self._get_connection() as conn:
            return pd.read_sql_query(query, conn, params=args)

    def get_run(self, run_id):
        with self._get_connection() as conn:
            conn.row_factory = sqlite3.Row
            row = conn.execute('SELECT * FROM runs WHERE run_id = ?', (run_id,)).fetchone()
            return dict(row) if row else None

    def export(self, path, limit=None):
        """副檔名 .xlsx 走 openpyxl，其餘輸出 CSV"""
        df = self.history(limit=limit)
        if path.lower().endswith('.xlsx'):
            df.to_excel(path, index=False)
        else:
            df.to_csv(path, index=False)
        logger.info("💾 已匯出 %d 筆執行紀錄到 %s", len(df), path)
        return path

    def backup(self, dest_path):
        os.makedirs(os.path.dirname(os.path.abspath(dest_path)), exist_ok=True)
        with self._get_connection() as src:
            dst = sqlite3.connect(dest_path)
            try:
                src.backup(dst)
            finally:
                dst.close()
        logger.info("💾 ledger 已備份到 %s", dest_path)
        return dest_path
