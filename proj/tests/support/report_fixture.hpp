#pragma once

#include "svbench/metrics.hpp"

namespace svtest {

/// The report rendered by tests/golden/report_fixture.md.
inline svbench::EvaluationReport fixture_report() {
  using namespace svbench;
  EvaluationReport r;
  auto& g = r.per_dimension[Dimension::gender];
  g.n = 1000;
  g.confusion = {400, 302, 200, 98};
  g.invalid_count = 13;
  auto& l = r.per_dimension[Dimension::language];
  l.n = 3;
  l.confusion = {1, 1, 0, 1};
  auto& d = r.per_dimension[Dimension::duration_lt2];
  d.n = 8;
  d.confusion = {1, 0, 4, 3};
  d.invalid_count = 1;
  TdStats td;
  td.n = 5560;
  td.speaker_correct = 5500;
  td.content_correct = 5557;
  td.joint_correct = 5497;
  r.td = td;
  r.metadata = {{"strategy", "concat_silence"}, {"model", "mock"}};
  return r;
}

}  // namespace svtest
