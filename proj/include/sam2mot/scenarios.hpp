#pragma once

// Built-in scenes on a 128x96 grid. Each one isolates one tracker mechanism:
//   S0  one static object
//   S1  two objects crossing head-on; the deeper one disappears behind the
//       nearer one for a few frames
//   S2  an object that dies early and one born late (addition and removal)
//   S3  a single object on a long take; only the drift term lowers its score
//   S4  three objects converging on one spot

#include <string>
#include <string_view>
#include <vector>

#include "sam2mot/error.hpp"
#include "sam2mot/synthetic.hpp"

namespace sam2mot {

inline const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names{"S0", "S1", "S2", "S3", "S4"};
  return names;
}

inline SceneScript builtin_scenario(std::string_view name) {
  const ImageGrid grid{128, 96};
  if (name == "S0") {
    return {grid, {{"A", 1, 30, {{1, {50, 30, 20, 40}}}, 1, 0}}};
  }
  if (name == "S1") {
    return {grid,
            {{"A", 1, 80, {{1, {8, 28, 20, 40}}, {80, {100, 28, 20, 40}}}, 2, 0},
             {"B", 1, 80, {{1, {100, 28, 20, 40}}, {80, {8, 28, 20, 40}}}, 1, 0}}};
  }
  if (name == "S2") {
    return {grid,
            {{"A", 1, 50, {{1, {10, 20, 20, 40}}, {50, {40, 20, 20, 40}}}, 1, 0},
             {"B", 30, 100, {{30, {96, 40, 20, 40}}, {100, {72, 40, 20, 40}}}, 2, 0}}};
  }
  if (name == "S3") {
    return {grid, {{"A", 1, 240, {{1, {10, 30, 20, 40}}, {240, {96, 26, 22, 42}}}, 1, 0}}};
  }
  if (name == "S4") {
    return {grid,
            {{"A", 1, 80, {{1, {8, 28, 20, 40}}, {80, {100, 28, 20, 40}}}, 3, 0},
             {"B", 1, 80, {{1, {100, 28, 20, 40}}, {80, {8, 28, 20, 40}}}, 2, 0},
             {"C", 1, 80, {{1, {54, 0, 20, 40}}, {80, {54, 56, 20, 40}}}, 1, 0}}};
  }
  throw InputError("unknown scenario '" + std::string(name) + "'");
}

}  // namespace sam2mot
