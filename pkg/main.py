#!/usr/bin/env python3
"""
Roll Match 主程式
滾動納入下的配對設計、偏誤校正估計與區塊 bootstrap 推論
"""

import sys
import os

# 添加專案根目錄到 Python 路徑
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
