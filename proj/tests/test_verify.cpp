#include <gtest/gtest.h>

#include <sstream>

#include "fenrec/verify.hpp"

using namespace fenrec;

TEST(Verify, AllSuitesPass) {
  auto results = verify::run_all();
  EXPECT_GE(results.size(), 10u);
  for (const auto& r : results) EXPECT_TRUE(r.passed()) << r.name;
  EXPECT_TRUE(verify::all_passed(results));
  std::ostringstream out;
  verify::print_report(out, results);
  EXPECT_NE(out.str().find("lemma_dominance"), std::string::npos);
}

TEST(Verify, InjectedFaultIsDetected) {
  verify::VerifyOptions opt;
  opt.mix = verify::mutant_mix_rescale_flipped;
  auto r = verify::norm_preservation(opt);
  EXPECT_FALSE(r.passed());
  EXPECT_GT(r.failures, 0u);
}

TEST(Verify, SuiteResultBookkeeping) {
  verify::SuiteResult r{"x"};
  EXPECT_FALSE(r.passed());  // no checks run
  r.expect_close(1.0, 1.0 + 1e-13, 1e-12, "close");
  EXPECT_TRUE(r.passed());
  r.expect_close(1.0, 2.0, 1e-12, "far");
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.checks, 2u);
}
