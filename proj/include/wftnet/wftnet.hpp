#pragma once

// Convenience include for the whole library.

#include "autodiff.hpp"
#include "checkpoint.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "folding.hpp"
#include "model.hpp"
#include "spectral.hpp"
#include "tensor.hpp"
#include "train.hpp"
#include "wftblock.hpp"
