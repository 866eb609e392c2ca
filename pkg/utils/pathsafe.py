"""
パス操作のユーティリティモジュール
出力フォルダの作成と、モニタ名・フィールド名から安全なファイル名を作る
"""
import re
from pathlib import Path

INVALID_CHARS = r'[<>:"/\\|?*\x00-\x1f]'


def sanitize_filename(filename: str, replacement: str = '_') -> str:
    """
    ファイル名を安全な形式にサニタイズ

    Args:
        filename: サニタイズするファイル名
        replacement: 無効な文字の置き換え文字

    Returns:
        サニタイズされたファイル名
    """
    # 無効な文字と空白を置き換え
    sanitized = re.sub(INVALID_CHARS, replacement, filename)
    sanitized = re.sub(r'\s+', replacement, sanitized)

    # 先頭・末尾のドットを削除
    sanitized = sanitized.strip(' .')

    # 空になった場合のデフォルト
    if not sanitized:
        sanitized = 'unnamed'

    return sanitized


def ensure_directory(directory: str | Path) -> bool:
    """
    ディレクトリが存在することを保証（なければ作成）

    Args:
        directory: ディレクトリパス

    Returns:
        成功した場合True
    """
    try:
        Path(directory).mkdir(parents=True, exist_ok=True)
        return True
    except OSError:
        return False


def output_path(directory: str | Path, stem: str, suffix: str) -> Path:
    """
    出力フォルダ内のファイルパス（stem はサニタイズする）

    Args:
        directory: 出力フォルダ
        stem: 拡張子なしのファイル名
        suffix: 拡張子（ドット付き、例：'.dat'）
    """
    return Path(directory) / f"{sanitize_filename(stem)}{suffix}"
