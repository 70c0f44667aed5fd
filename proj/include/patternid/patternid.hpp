// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "patternid/annotations.hpp"
#include "patternid/augment.hpp"
#include "patternid/boxes.hpp"
#include "patternid/config.hpp"
#include "patternid/detection.hpp"
#include "patternid/errors.hpp"
#include "patternid/eval.hpp"
#include "patternid/image.hpp"
#include "patternid/logreg.hpp"
#include "patternid/net.hpp"
#include "patternid/parallel.hpp"
#include "patternid/pca.hpp"
#include "patternid/pipeline.hpp"
#include "patternid/random.hpp"
#include "patternid/splits.hpp"
#include "patternid/tensor.hpp"
#include "patternid/tensor_io.hpp"
#include "patternid/version.hpp"
