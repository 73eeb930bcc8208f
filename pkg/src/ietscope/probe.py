"""Best-effort user-space acquisition on x86-64.

A tiny machine-code routine reads the time-stamp counter, runs ten CPUID
instructions (serializing, and intercepted by any hypervisor), reads the
counter again and returns the difference. It runs pinned to one logical CPU.

Unlike a kernel driver this cannot mask interrupts, so the data is noisier
than a driver's; it is never used for acceptance checks.
"""
from __future__ import annotations

import ctypes
import mmap
import os
import platform
import time
from typing import Optional

import numpy as np

from .core import IetArray
from .errors import AffinityFailedError, UnsupportedPlatformError

_RDTSC_TO_RAX = bytes([
    0x0F, 0x31,                    # rdtsc
    0x48, 0xC1, 0xE2, 0x20,        # shl rdx, 32
    0x48, 0x09, 0xD0,              # or rax, rdx
])
_CPUID_LEAF0 = bytes([0x31, 0xC0, 0x0F, 0xA2])  # xor eax, eax; cpuid

_CODE = (
    bytes([0x53])                  # push rbx (cpuid clobbers it)
    + _RDTSC_TO_RAX
    + bytes([0x49, 0x89, 0xC0])    # mov r8, rax
    + _CPUID_LEAF0 * 10
    + _RDTSC_TO_RAX
    + bytes([0x4C, 0x29, 0xC0])    # sub rax, r8
    + bytes([0x5B, 0xC3])          # pop rbx; ret
)


class _TimedCpuid:
    """Executable mapping holding the measurement routine."""

    def __init__(self):
        if platform.machine().lower() not in ("x86_64", "amd64"):
            raise UnsupportedPlatformError(f"needs x86-64, running on {platform.machine()}")
        if not hasattr(mmap, "PROT_EXEC"):
            raise UnsupportedPlatformError("executable memory mappings are unavailable")
        try:
            self._buf = mmap.mmap(-1, mmap.PAGESIZE,
                                  prot=mmap.PROT_READ | mmap.PROT_WRITE | mmap.PROT_EXEC)
        except (OSError, ValueError) as exc:
            raise UnsupportedPlatformError(f"cannot map executable memory: {exc}") from exc
        self._buf.write(_CODE)
        addr = ctypes.addressof(ctypes.c_char.from_buffer(self._buf))
        self._fn = ctypes.CFUNCTYPE(ctypes.c_uint64)(addr)

    def __call__(self) -> int:
        return int(self._fn())


def cpu_model() -> str:
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or "unknown"


def probe_array(rows: int = 1000, cols: int = 10, cpu_index: int = 0,
                inter_column_delay_ms: int = 2000, timer: Optional[_TimedCpuid] = None) -> IetArray:
    """Measure a ``rows x cols`` array of ten-CPUID durations on one CPU.

    Raises :class:`UnsupportedPlatformError` or :class:`AffinityFailedError`
    before any measurement is taken.
    """
    if rows < 2 or cols < 1:
        raise ValueError("an IET array needs rows >= 2 and cols >= 1")
    out = _measure(rows, cols, cpu_index, inter_column_delay_ms, timer)
    return IetArray(out, label=f"probe:{cpu_model()}")


def probe_measurement(cpu_index: int = 0, timer: Optional[_TimedCpuid] = None) -> int:
    """One ten-CPUID duration in ticks."""
    return int(_measure(1, 1, cpu_index, 0, timer)[0, 0])


def _measure(rows, cols, cpu_index, delay_ms, timer):
    timer = timer or _TimedCpuid()
    if not hasattr(os, "sched_setaffinity"):
        raise AffinityFailedError("thread affinity is not supported on this platform")
    previous = os.sched_getaffinity(0)
    try:
        os.sched_setaffinity(0, {cpu_index})
    except (OSError, ValueError) as exc:
        raise AffinityFailedError(f"cannot pin to CPU {cpu_index}: {exc}") from exc
    out = np.empty((rows, cols), dtype=np.int64)
    try:
        for j in range(cols):
            if j and delay_ms:
                time.sleep(delay_ms / 1000)
            for i in range(rows):
                v = timer()
                while v <= 0 or v >= 1 << 62:  # counter went backwards (migration/wrap)
                    v = timer()
                out[i, j] = v
    finally:
        os.sched_setaffinity(0, previous)
    return out


class ProbeProvider:
    """Endless source of freshly probed arrays, for the detector."""

    def __init__(self, rows: int = 1000, cols: int = 10, cpu_index: int = 0,
                 inter_column_delay_ms: int = 2000):
        self.rows, self.cols = rows, cols
        self.cpu_index = cpu_index
        self.inter_column_delay_ms = inter_column_delay_ms
        self._timer = _TimedCpuid()

    def __iter__(self):
        return self

    def __next__(self) -> IetArray:
        return probe_array(self.rows, self.cols, self.cpu_index, self.inter_column_delay_ms, self._timer)
