// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmvae/rng.hpp"
#include "mmvae/taxonomy.hpp"
#include "mmvae/nn.hpp"
#include "mmvae/vae.hpp"
#include "mmvae/moe.hpp"
#include "mmvae/retrieval.hpp"
#include "mmvae/eval.hpp"
#include "mmvae/experiment.hpp"
