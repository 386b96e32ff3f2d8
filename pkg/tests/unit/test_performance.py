"""
Runtime measurement checks against real clocks.

Tests cover:
- Median of repeated sleeps lands near the sleep duration
- Measurements serialize across threads
"""

import threading
import time

import pytest

from app.services.cost import MEASUREMENT_LOCK, MeasurementProtocol, measure_runtime

pytestmark = pytest.mark.performance


class TestMeasureRuntime:
    """Test measure_runtime against known durations."""

    def test_median_of_sleeps(self):
        measurement = measure_runtime(lambda: time.sleep(0.05), MeasurementProtocol(warmup=1, repetitions=5))
        assert len(measurement.samples) == 5
        assert 0.04 <= measurement.seconds <= 0.06

    def test_measurements_do_not_overlap(self):
        active = []
        overlaps = []

        def inference():
            active.append(1)
            if len(active) > 1:
                overlaps.append(len(active))
            time.sleep(0.005)
            active.pop()

        threads = [threading.Thread(target=measure_runtime,
                                    args=(inference, MeasurementProtocol(warmup=0, repetitions=3)))
                   for _ in range(4)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert overlaps == []
        assert not MEASUREMENT_LOCK.locked()
