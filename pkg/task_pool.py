#!/usr/bin/env python3
"""
并发任务池 - asyncio.Semaphore 控制并发，计算放到线程中执行

numpy/BLAS 在计算时释放 GIL，线程足以并行；结果按提交顺序返回，
与完成顺序无关。
"""

import asyncio
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")


async def _gather_limited(jobs: Sequence[Callable[[], T]], max_concurrent: int) -> List[T]:
    semaphore = asyncio.Semaphore(max(1, int(max_concurrent)))

    async def run_one(job: Callable[[], T]) -> T:
        async with semaphore:
            return await asyncio.to_thread(job)

    return await asyncio.gather(*(run_one(job) for job in jobs))


def run_jobs(jobs: Sequence[Callable[[], T]], max_concurrent: int = 1) -> List[T]:
    """执行一组无参任务，返回与 jobs 同序的结果列表"""
    jobs = list(jobs)
    if max_concurrent <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    return asyncio.run(_gather_limited(jobs, max_concurrent))
