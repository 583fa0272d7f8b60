#pragma once

#include "fedsample/linalg/cholesky.hpp"
#include "fedsample/linalg/direct.hpp"
#include "fedsample/linalg/matrix.hpp"
#include "fedsample/linalg/serialize.hpp"
#include "fedsample/linalg/woodbury.hpp"
#include "fedsample/sampler/rng.hpp"
#include "fedsample/sampler/sampler.hpp"
#include "fedsample/sampler/trace_io.hpp"
#include "fedsample/stream/client.hpp"
#include "fedsample/stream/drift.hpp"
#include "fedsample/stream/embedding_io.hpp"
#include "fedsample/stream/federation.hpp"
#include "fedsample/stream/sample.hpp"
#include "fedsample/stream/source.hpp"
#include "fedsample/bench/diversity.hpp"
#include "fedsample/bench/records.hpp"
#include "fedsample/bench/stability.hpp"
#include "fedsample/bench/timing.hpp"
