#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

#include "otw/core.hpp"
#include "otw/error.hpp"
#include "otw/flat.hpp"
#include "otw/format.hpp"
#include "otw/io.hpp"
#include "otw/lab.hpp"
#include "otw/loss.hpp"
#include "otw/matrix.hpp"
#include "otw/ot.hpp"
#include "otw/ot_oracle.hpp"
#include "otw/parallel.hpp"
#include "otw/prng.hpp"
#include "otw/sankey.hpp"
#include "otw/sweep.hpp"
#include "otw/version.hpp"
#include "otw/weighting.hpp"
