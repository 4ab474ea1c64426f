# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""Root Tests module."""

import fmst_tracker  # noqa: F401
