"""数値計算・例外・パス操作のユーティリティ"""
