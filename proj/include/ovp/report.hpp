#pragma once

// JSON records for statistics and search results. Requires nlohmann/json.

#include "json.hpp"
#include "ovp/quantizer.hpp"

namespace ovp {

inline void to_json(nlohmann::json& j, const TensorStats& st) {
  j = {
      {"mu", st.mu},
      {"sigma", st.sigma},
      {"max_abs", st.max_abs},
      {"max_sigma_ratio", st.max_sigma_ratio ? nlohmann::json(*st.max_sigma_ratio) : nlohmann::json(nullptr)},
      {"frac_gt_3sigma", st.frac_gt_3sigma},
      {"frac_gt_6sigma", st.frac_gt_6sigma},
      {"degenerate", st.degenerate()},
  };
}

inline void to_json(nlohmann::json& j, const PairStats& ps) {
  j = {{"nn", ps.nn}, {"on", ps.on}, {"oo", ps.oo}, {"pairs", ps.pairs}};
}

inline void to_json(nlohmann::json& j, const ScaleSearchResult& r) {
  j = {
      {"scale", r.scale},
      {"mse", r.mse},
      {"candidates_evaluated", r.candidates_evaluated},
      {"initial_scale", r.initial_scale},
  };
}

}  // namespace ovp
