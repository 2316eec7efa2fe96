#pragma once

#include "uietl/checkpoint.hpp"
#include "uietl/config.hpp"
#include "uietl/domain.hpp"
#include "uietl/error.hpp"
#include "uietl/extractor.hpp"
#include "uietl/image.hpp"
#include "uietl/image_io.hpp"
#include "uietl/iqa/fullref.hpp"
#include "uietl/iqa/niqe.hpp"
#include "uietl/iqa/scorer.hpp"
#include "uietl/iqa/stats.hpp"
#include "uietl/iqa/uciqe.hpp"
#include "uietl/iqa/uiqm.hpp"
#include "uietl/losses.hpp"
#include "uietl/manifest.hpp"
#include "uietl/metric_select.hpp"
#include "uietl/net/restoration_net.hpp"
#include "uietl/training.hpp"
