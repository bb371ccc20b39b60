#pragma once

#include "taxo/core.hpp"
#include "taxo/embed_stats.hpp"
#include "taxo/eval.hpp"
#include "taxo/features.hpp"
#include "taxo/inference.hpp"
#include "taxo/io.hpp"
#include "taxo/training.hpp"
