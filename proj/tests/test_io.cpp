#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "pmdlab/io.hpp"

using namespace pmdlab;

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-0.0), "0");
  EXPECT_EQ(format_double(1e-300), "1e-300");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::exp(u(rng)) * (i % 2 ? -1.0 : 1.0);
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_TRUE(std::isnan(parse_double("nan")));
  EXPECT_THROW(parse_double("1.0x"), InvalidArgument);
}

TEST(CsvTable, WritesAndReadsBack) {
  CsvTable t({"name", "x", "k"});
  t.add_row({std::string("a,b"), 0.25, 3L});
  t.add_row({std::string("say \"hi\""), std::nan(""), -1L});
  EXPECT_EQ(t.str(), "name,x,k\n\"a,b\",0.25,3\n\"say \"\"hi\"\"\",nan,-1\n");
  const auto d = parse_csv(t.str());
  ASSERT_EQ(d.rows.size(), 2u);
  EXPECT_EQ(d.rows[0][0], "a,b");
  EXPECT_EQ(d.rows[1][0], "say \"hi\"");
  EXPECT_EQ(d.column("k"), 2u);
  EXPECT_THROW(d.column("zz"), InvalidArgument);
  EXPECT_THROW(t.add_row({1L}), InvalidArgument);
}

TEST(CsvTable, HeaderOnly) {
  CsvTable t({"a", "b"});
  EXPECT_EQ(t.str(), "a,b\n");
}

TEST(Files, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "pmdlab_test_io";
  std::filesystem::remove_all(dir);
  write_text(dir / "sub" / "x.txt", "hello\n");
  EXPECT_EQ(read_text(dir / "sub" / "x.txt"), "hello\n");
  EXPECT_THROW(read_text(dir / "missing.txt"), IoError);
  write_text(dir / "blocker", "");
  EXPECT_THROW(write_text(dir / "blocker" / "y.txt", "z"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Schemas, GoldenHeaders) {
  SweepConfig cfg;
  cfg.p_grid = {0.1};
  cfg.n_grid = {4};
  cfg.trials = 3;
  const auto rep = estimation_error_sweep(cfg);
  const auto est = estimation_table(rep).str();
  EXPECT_EQ(est.substr(0, est.find('\n')),
            "method,p,n,tau,trials,mean_dbar2,std_dbar2,pos_err,neg_err,scaled_err,bound,violations");
  const auto sig = signs_table(rep).str();
  EXPECT_EQ(sig.substr(0, sig.find('\n')),
            "method,p,n,tau,trials,pos_err,pos_std,neg_err,neg_std,pos_trials,neg_trials");
  const auto d = parse_csv(est);
  ASSERT_EQ(d.rows.size(), 2u);
  EXPECT_EQ(d.rows[0][0], "mean");
  EXPECT_EQ(d.rows[1][0], "part");
  EXPECT_EQ(parse_double(d.rows[0][d.column("mean_dbar2")]), rep.cells[0].mean_dbar2);

  const auto j = to_json(rep);
  EXPECT_EQ(j["cells"].size(), 2u);
  EXPECT_EQ(j["cells"][1]["method"], "part");
  EXPECT_EQ(j["cells"][0]["trials"], 3);

  TrainTrajectory tr;
  tr.steps.push_back({});
  tr.steps[0].wall_seconds = 12.5;
  const auto tt = trajectory_table(tr).str();
  EXPECT_EQ(tt, "step,J,emp_reward,min_logratio,max_logratio,lambda_mean,entropy,eps_opt\n"
                "0,0,nan,nan,nan,0,0,nan\n");
}

TEST(Json, NonFiniteAsStrings) {
  EXPECT_EQ(json_number(1.5), 1.5);
  EXPECT_EQ(json_number(std::nan("")), "nan");
  EXPECT_EQ(json_number(INFINITY), "inf");
}
