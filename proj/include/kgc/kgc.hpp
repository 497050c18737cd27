/*
 * Copyright 2026 The kgcascade Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "kgc/candidate_list.hpp"
#include "kgc/common.hpp"
#include "kgc/features.hpp"
#include "kgc/graph_store.hpp"
#include "kgc/kge/checkpoint.hpp"
#include "kgc/kge/gram_schmidt.hpp"
#include "kgc/kge/init.hpp"
#include "kgc/kge/model.hpp"
#include "kgc/kge/train.hpp"
#include "kgc/path_rules.hpp"
#include "kgc/pipeline/artifacts.hpp"
#include "kgc/pipeline/config.hpp"
#include "kgc/pipeline/report.hpp"
#include "kgc/pipeline/stages.hpp"
#include "kgc/pq.hpp"
#include "kgc/rerank_ensemble.hpp"
#include "kgc/retrieval_ensemble.hpp"
#include "kgc/typing_retrieval.hpp"
