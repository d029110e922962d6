// Copyright 2026 The DepthPolyp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Per-image Dice / IoU / Recall and their corpus means.

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "depthpolyp/dataset.hpp"
#include "depthpolyp/network.hpp"

namespace depthpolyp {

inline constexpr double kDefaultThreshold = 0.5;

struct Metrics {
  double dice = 0.0;
  double iou = 0.0;
  double recall = 0.0;
};

/// Binarises `prob` at prob > threshold. Both empty: all three are 1. Empty
/// ground truth with a non-empty prediction: Dice = IoU = 0, Recall = 1.
inline Metrics segmentation_metrics(std::span<const float> prob, std::span<const float> mask,
                                    double threshold = kDefaultThreshold) {
  if (prob.size() != mask.size()) throw DimensionError("metrics: prediction and mask sizes differ");
  std::size_t tp = 0, pred = 0, truth = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (mask[i] != 0.0f && mask[i] != 1.0f) throw DataError("metrics: mask is not binary");
    const bool p = prob[i] > threshold;
    const bool g = mask[i] == 1.0f;
    pred += p;
    truth += g;
    tp += p && g;
  }
  if (pred == 0 && truth == 0) return {1.0, 1.0, 1.0};
  const double inter = static_cast<double>(tp);
  Metrics m;
  m.dice = 2.0 * inter / static_cast<double>(pred + truth);
  m.iou = inter / static_cast<double>(pred + truth - tp);
  m.recall = truth == 0 ? 1.0 : inter / static_cast<double>(truth);
  return m;
}

struct MetricReport {
  std::vector<std::string> ids;  // sorted
  std::vector<Metrics> per_sample;
  Metrics mean;
  double threshold = kDefaultThreshold;

  std::size_t count() const { return per_sample.size(); }
};

/// Sorts by id and averages, so the report is independent of corpus order.
inline MetricReport summarize(std::vector<std::pair<std::string, Metrics>> rows, double threshold) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  MetricReport r;
  r.threshold = threshold;
  for (auto& [id, m] : rows) {
    r.ids.push_back(id);
    r.per_sample.push_back(m);
    r.mean.dice += m.dice;
    r.mean.iou += m.iou;
    r.mean.recall += m.recall;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    r.mean.dice /= n;
    r.mean.iou /= n;
    r.mean.recall /= n;
  }
  return r;
}

/// Runs the model in eval mode over `samples` in batches, split across
/// `threads` workers by contiguous chunks. Eval-mode forward passes do not
/// touch model state, so the workers share the model.
template <std::floating_point T>
MetricReport evaluate(DepthPolyp<T>& model, const std::vector<Sample>& samples,
                      double threshold = kDefaultThreshold, std::size_t batch_size = 16, std::size_t threads = 1) {
  std::vector<std::pair<std::string, Metrics>> rows(samples.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; b += batch_size) {
      std::vector<const Sample*> chunk;
      for (std::size_t i = b; i < std::min(end, b + batch_size); ++i) chunk.push_back(&samples[i]);
      Batch batch = make_batch(chunk);
      ModelOutput<T> out = model.forward(batch.image.template cast<T>(), Mode::eval);
      Tensor<T> prob = sigmoid(out.seg_logits);
      const std::size_t plane = batch.mask.shape().plane();
      std::vector<float> p(plane);
      for (std::size_t k = 0; k < chunk.size(); ++k) {
        for (std::size_t i = 0; i < plane; ++i) p[i] = static_cast<float>(prob.data()[k * plane + i]);
        rows[b + k] = {chunk[k]->id, segmentation_metrics(p, batch.mask.data().subspan(k * plane, plane), threshold)};
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));
  if (threads == 1) {
    run(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t per = (samples.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * per, end = std::min(samples.size(), begin + per);
      if (begin >= end) continue;
      pool.emplace_back([&, t, begin, end] {
        try {
          run(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return summarize(std::move(rows), threshold);
}

}  // namespace depthpolyp
