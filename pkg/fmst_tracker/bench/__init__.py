# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0
