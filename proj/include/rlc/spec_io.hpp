#pragma once

// Problem files are JSON documents:
//
//   {
//     "n_states": 3,
//     "labels": ["a", "b", "c"],                     (optional)
//     "alpha": 0.5,
//     "kind": "fh" | "fe" | "ih",
//     "horizon": 4,                                  (fh)
//     "terminal_states": [2],                        (fe)
//     "q": [1.0, 0.5, 0.0]                           dense, time-invariant
//        | [{"state": 0, "t": 1, "value": 2.0}, ...]  sparse; missing entries
//                                                    are 0, t < horizon
//     "q_final": [0.0, 0.0, 3.0],                    (fh/fe, optional)
//     "passive": [{"from": 0, "to": 1, "prob": 0.5}, ...]
//   }
//
// Unknown fields are rejected. Numbers are read with round-to-nearest
// decimal conversion and written in shortest round-trip form, so
// save -> load reproduces a spec entry for entry.

#include "rlc/model.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace rlc {

struct LoadOptions {
  RowCheck row_check = RowCheck::kStrict;
  /// Run validate() after parsing and throw on its errors. Ignored for
  /// RowCheck::kUnchecked, which exists so the caller can report instead.
  bool require_valid = true;
};

ProblemSpec parse_spec(std::string_view text, const LoadOptions& options = {},
                       const std::string& source = "<memory>");
ProblemSpec load_spec(const std::filesystem::path& path, const LoadOptions& options = {});

std::string spec_to_string(const ProblemSpec& spec);
void save_spec(const ProblemSpec& spec, const std::filesystem::path& path);

}  // namespace rlc
