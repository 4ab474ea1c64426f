# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Feature map selection tracking.

This package tracks a single target through a video by scoring CNN feature channels
against target maps, turning the scores into a weight vector and searching the weighted
channel sum for the best candidate rect. Weights come either from the classic hard
top-fraction selection or from a small learned network.

The main entry point is :class:`fmst_tracker.tracker.Tracker`; the ``fmst`` command line
wraps tracking, benchmarking, training and synthetic sequence generation.

Example:
    ```python
    from fmst_tracker.config import TrackerConfig, TrackerMode
    from fmst_tracker.domain.geometry import Rect
    from fmst_tracker.tracker import Tracker

    tracker = Tracker(TrackerConfig(mode=TrackerMode.FMST_HARD))
    rects = tracker.track(frames, Rect.from_top_left(40, 60, 32, 32))
    ```

"""
