"""
平行執行工具
以 asyncio.gather 搭配執行緒池分派工作，結果依輸入順序回傳
"""

import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from .logger import log_debug

T = TypeVar('T')
R = TypeVar('R')


async def _gather(func: Callable[[T], R], items: Sequence[T], workers: int, return_exceptions: bool) -> List:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        tasks = [loop.run_in_executor(pool, func, item) for item in items]
        return list(await asyncio.gather(*tasks, return_exceptions=return_exceptions))


def run_in_workers(
    func: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    return_exceptions: bool = False
) -> List:
    """對每個 item 執行 func

    Args:
        func: 單一工作函數，不可修改共享狀態
        items: 工作清單
        workers: 執行緒數，<= 1 時以迴圈串行執行
        return_exceptions: 為 True 時例外會放入結果列表而非直接拋出

    Returns:
        與 items 同順序的結果列表
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        results = []
        for item in items:
            try:
                results.append(func(item))
            except Exception as e:
                if not return_exceptions:
                    raise
                results.append(e)
        return results

    log_debug(f"run_in_workers: {len(items)} 個工作, {workers} 個執行緒")
    return asyncio.run(_gather(func, items, workers, return_exceptions))
