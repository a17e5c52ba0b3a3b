#pragma once

#include "ekicl/annotator.hpp"
#include "ekicl/chat_corpus.hpp"
#include "ekicl/common.hpp"
#include "ekicl/config.hpp"
#include "ekicl/embedding_store.hpp"
#include "ekicl/ensemble_eval.hpp"
#include "ekicl/fixture.hpp"
#include "ekicl/llm_gateway.hpp"
#include "ekicl/parsing_decomposer.hpp"
#include "ekicl/prompting.hpp"
#include "ekicl/retrieval.hpp"
#include "ekicl/rng.hpp"
#include "ekicl/slm_assessor.hpp"
