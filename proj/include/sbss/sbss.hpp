// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "sbss/audio.hpp"
#include "sbss/audio_buffer.hpp"
#include "sbss/bench.hpp"
#include "sbss/config.hpp"
#include "sbss/error.hpp"
#include "sbss/fft.hpp"
#include "sbss/model.hpp"
#include "sbss/model_store.hpp"
#include "sbss/nn_ops.hpp"
#include "sbss/ssm.hpp"
#include "sbss/streaming.hpp"
#include "sbss/verify.hpp"
#include "sbss/weights.hpp"
