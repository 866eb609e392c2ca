"""シミュレーションと検証のサービス"""
