"""
スカラー場のサムネイル画像
||B||² やガウス距離 ρ の格子場をPNGに描画する
"""
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image, ImageOps

from utils.pathsafe import ensure_directory, output_path

logger = logging.getLogger(__name__)

LOW_COLOR = "#0b1d51"
HIGH_COLOR = "#ffd166"
DEFAULT_SIZE = (256, 256)


def render_field(name: str, values: np.ndarray, size: Tuple[int, int] = DEFAULT_SIZE) -> Optional[Image.Image]:
    """
    値を0-255に正規化し、2色のグラデーションで着色する

    Args:
        name: 場の名前（ログ用）
        values: 格子上の値（m = 1 または 2。3次元以上は先頭2軸の断面）
        size: 画像サイズ (width, height)

    Returns:
        PIL Image（描画できない場合None）
    """
    data = np.asarray(values, dtype=float)
    if data.ndim == 0 or data.size == 0:
        logger.warning(f"描画できない場です: {name}")
        return None
    if not np.all(np.isfinite(data)):
        logger.error(f"非有限値を含む場は描画できません: {name}")
        return None

    if data.ndim == 1:
        data = data[None, :]
    while data.ndim > 2:
        data = data[..., 0]

    lo, hi = float(np.min(data)), float(np.max(data))
    span = hi - lo
    scaled = np.zeros_like(data) if span == 0.0 else (data - lo) / span
    # 第1軸を横方向に描く
    gray = Image.fromarray(np.ascontiguousarray(np.round(255.0 * scaled.T).astype(np.uint8)))
    colored = ImageOps.colorize(gray, black=LOW_COLOR, white=HIGH_COLOR)
    return colored.resize(size, Image.Resampling.NEAREST)


def save_field_image(name: str, values: np.ndarray, t: float, directory: str | Path,
                     size: Tuple[int, int] = DEFAULT_SIZE) -> Optional[Path]:
    """場の画像を "{name}_t{t}.png" として保存する"""
    image = render_field(name, values, size)
    if image is None:
        return None
    ensure_directory(directory)
    path = output_path(directory, f"{name}_t{t:.6g}", ".png")
    image.save(path, format="PNG")
    logger.info(f"画像を保存しました: {path}")
    return path
