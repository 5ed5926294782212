// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "diffq/calib/calibrate.hpp"
#include "diffq/diag/diagnostics.hpp"
#include "diffq/numerics/kernels.hpp"
#include "diffq/quant/quant_model.hpp"
#include "diffq/recon/partition.hpp"
#include "toy_fixture.hpp"

namespace diffq::diag {
namespace {

namespace fs = std::filesystem;

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("diffq_diag_" + name);
  fs::remove_all(dir);
  return dir;
}

class Toy : public ::testing::Test {
 protected:
  const diffusion::ModelGraph& fp = testing::trained_toy();
  const recon::BlockPartition part = recon::partition_blocks(fp);

  quant::QuantModel disabled() const {
    auto qm = quant::wrap_model(fp, 4, 8, part, 100);
    qm.enable_weight_quant(false);
    qm.enable_activation_quant(false);
    return qm;
  }
  quant::QuantModel naive() const {
    auto qm = quant::wrap_model(fp, 4, 8, part, 100);
    calib::calibrate_standard(qm, testing::toy_calib(), {}, true);
    return qm;
  }
};

TEST_F(Toy, FpFeaturesAreDistinctAcrossTimesteps) {
  const auto table = feature_table(fp, 100);
  ASSERT_EQ(table.size(), 100u);
  for (std::size_t i = 0; i < table[0].size(); ++i)
    for (std::size_t a = 0; a < 100; ++a)
      for (std::size_t b = a + 1; b < 100; ++b) ASSERT_FALSE(numerics::identical(table[a][i], table[b][i]));
}

TEST_F(Toy, SelfDiagnosticsAreExact) {
  const auto qm = disabled();
  const auto fpt = feature_table(fp, 100);
  const auto qt = feature_table(qm);
  for (int t = 1; t <= 100; ++t)
    for (std::size_t i = 0; i <= fp.n_blocks(); ++i) {
      ASSERT_EQ(numerics::kernels::cosine_similarity(fpt[t - 1][i], qt[t - 1][i]), 1.0);
      ASSERT_EQ(mismatch_delta(fpt, qt[t - 1][i], t, i), 0);
    }
  EXPECT_EQ(temporal_feature_error(fp, qm, 37, 2), 1.0);
  EXPECT_EQ(mismatch_delta(fp, qm, 37, 2), 0);
  for (std::size_t i = 0; i < fp.n_blocks(); ++i)
    EXPECT_EQ(block_output_similarity(fp, qm, testing::toy_calib().entries[5], i), 1.0);
}

TEST_F(Toy, NegatedEmbeddingGivesMinusOne) {
  diffusion::ModelGraph neg = fp;
  const std::string emb = fp.embedding_layer_name(3);
  for (auto& [name, t] : neg.parameters())
    if (name == emb + ".weight" || name == emb + ".bias") *t = numerics::kernels::scale(*t, -1.0);
  auto qm = quant::wrap_model(neg, 32, 32, part, 100);
  EXPECT_NEAR(temporal_feature_error(fp, qm, 20, 4), -1.0, 1e-12);  // g_3 is feature index 4
  EXPECT_EQ(temporal_feature_error(fp, qm, 20, 3), 1.0);
}

TEST(Cosine, OrthogonalIsZero) {
  EXPECT_EQ(numerics::kernels::cosine_similarity(numerics::Tensor::from({1, 1, 0}), numerics::Tensor::from({1, -1, 5})), 0.0);
}

TEST_F(Toy, ShiftedFeatureGivesItsOffset) {
  const auto table = feature_table(fp, 100);
  for (int t : {1, 10, 50, 97})
    for (std::size_t i : {0u, 3u}) EXPECT_EQ(mismatch_delta(table, table[t + 3 - 1][i], t, i), 3);
  EXPECT_EQ(mismatch_delta(table, table[0][2], 60, 2), -59);
}

TEST(Mismatch, TieBreaking) {
  using numerics::Tensor;
  // Feature i=0 at t=1..5; t=2 and t=4 share a vector, as do t=3 and t=5.
  const Tensor a = Tensor::from({1, 0}), b = Tensor::from({0, 1}), c = Tensor::from({1, 1}), d = Tensor::from({1, -1});
  const FeatureTable table{{a}, {b}, {c}, {b}, {c}};
  EXPECT_EQ(mismatch_delta(table, b, 3, 0), -1);  // t'=2 and t'=4 tie at |delta|=1
  EXPECT_EQ(mismatch_delta(table, c, 1, 0), 2);   // t'=3 beats t'=5
  EXPECT_EQ(mismatch_delta(table, d, 1, 0), 0);   // d is closest to a (cos 0.707)
}

TEST_F(Toy, NaiveQuantizationShiftsSomeTimestep) {
  const auto qm = naive();
  const auto table = feature_table(fp, 100);
  const auto qt = feature_table(qm);
  std::size_t nonzero = 0;
  for (int t = 1; t <= 100; ++t)
    for (std::size_t i = 0; i <= fp.n_blocks(); ++i) nonzero += mismatch_delta(table, qt[t - 1][i], t, i) != 0;
  EXPECT_GT(nonzero, 0u);
}

TEST_F(Toy, TrajectoryDeviation) {
  const auto eps = diffusion::fp_eps_model(fp);
  const auto tr = diffusion::sample(eps, testing::toy_schedule(), 10, diffusion::SamplerKind::ddim, 4, {2, 1, 8, 8});
  const auto rows = trajectory_deviation(tr, tr);
  ASSERT_EQ(rows.size(), 11u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.mse, 0.0);
    EXPECT_EQ(r.cos, 1.0);
  }
  EXPECT_EQ(rows.front().t, 100);
  EXPECT_EQ(rows.back().t, 0);

  auto shorter = tr;
  shorter.states.pop_back();
  shorter.timesteps.pop_back();
  shorter.noise_seeds.pop_back();
  EXPECT_THROW(trajectory_deviation(tr, shorter), std::invalid_argument);

  const auto q = naive();
  const auto qtr = diffusion::sample(q.eps_model(), testing::toy_schedule(), 10, diffusion::SamplerKind::ddim, 4, {2, 1, 8, 8});
  const auto dev = trajectory_deviation(tr, qtr);
  EXPECT_EQ(dev.front().mse, 0.0);  // shared x_T
  EXPECT_GT(dev.back().mse, 0.0);
}

TEST_F(Toy, ReportFilesAndRoundTrip) {
  DiagConfig cfg;
  cfg.n_samples = 2;
  cfg.steps = 10;
  cfg.sampler = diffusion::SamplerKind::ddim;
  const auto qm = naive();
  const auto report = diagnose(fp, qm, testing::toy_schedule(), testing::toy_calib(), cfg);
  EXPECT_EQ(report.tfe.size(), 100u * 7u);
  EXPECT_EQ(report.mismatch.size(), 100u * 7u);
  EXPECT_EQ(report.trajectory.size(), 11u);
  EXPECT_EQ(report.ranges.size(), part.tib.size() * 100);
  EXPECT_EQ(report.blocks.size(), testing::toy_calib().by_t.size() * 6u);

  const auto dir = scratch("report");
  emit_report(report, dir);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files.insert(e.path().filename().string());
  EXPECT_EQ(files, (std::set<std::string>{"tfe.csv", "mismatch.csv", "trajectory.csv", "blocks.csv", "ranges.csv",
                                          "summary.txt"}));

  // Re-aggregate the emitted TFE table and compare with the summary.
  const auto rows = read_csv(dir / "tfe.csv");
  ASSERT_EQ(rows.front(), (std::vector<std::string>{"t", "i", "cos"}));
  double sum = 0, dist = 0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const double c = std::stod(rows[k][2]);
    sum += c;
    dist += 1.0 - c;
  }
  const auto s = summarize(report);
  EXPECT_NEAR(sum / (rows.size() - 1), s.mean_tfe, 1e-15);
  EXPECT_NEAR(dist / (rows.size() - 1), s.mean_tfe_distance, 1e-15);
  const std::string summary = slurp(dir / "summary.txt");
  std::istringstream in(summary);
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) kv[line.substr(0, line.find(": "))] = line.substr(line.find(": ") + 2);
  EXPECT_EQ(std::stod(kv.at("mean_tfe")), s.mean_tfe);
  EXPECT_EQ(std::stoi(kv.at("max_abs_delta")), s.max_abs_delta);
  EXPECT_EQ(std::stod(kv.at("terminal_mse")), s.terminal_mse);

  // Byte-identical on a second run.
  const auto again = scratch("report2");
  emit_report(diagnose(fp, qm, testing::toy_schedule(), testing::toy_calib(), cfg), again);
  for (const auto& f : files) EXPECT_EQ(slurp(dir / f), slurp(again / f)) << f;
}

TEST_F(Toy, UncalibratedModelHasNoRangeRows) {
  DiagConfig cfg;
  cfg.n_samples = 1;
  cfg.steps = 5;
  cfg.sampler = diffusion::SamplerKind::ddim;
  const auto r = diagnose(fp, disabled(), testing::toy_schedule(), testing::toy_calib(), cfg);
  EXPECT_TRUE(r.ranges.empty());
}

TEST(Report, EmptyReportHasHeadersOnly) {
  const auto dir = scratch("empty");
  emit_report({}, dir);
  EXPECT_EQ(slurp(dir / "tfe.csv"), "t,i,cos\n");
  EXPECT_EQ(slurp(dir / "mismatch.csv"), "t,i,delta\n");
  EXPECT_EQ(slurp(dir / "trajectory.csv"), "step,t,mse,cos\n");
  EXPECT_EQ(slurp(dir / "blocks.csv"), "t,i,cos\n");
  EXPECT_EQ(slurp(dir / "ranges.csv"), "layer,t,min,max\n");
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
}

}  // namespace
}  // namespace diffq::diag
