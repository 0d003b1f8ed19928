#pragma once

// Umbrella header for the interpretation-modeling toolkit.

#include "imtk/backends.hpp"
#include "imtk/config.hpp"
#include "imtk/core.hpp"
#include "imtk/data_model.hpp"
#include "imtk/evaluation.hpp"
#include "imtk/generation.hpp"
#include "imtk/moderation.hpp"
#include "imtk/prompting.hpp"
#include "imtk/similarity.hpp"
