#include <gtest/gtest.h>

#include <cmath>

#include "mixboost/report.hpp"

using namespace mixboost;

TEST(Pearson, HandCases) {
  // perfectly collinear
  EXPECT_NEAR(*pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(*pearson({1, 2, 3}, {6, 4, 2}), -1.0, 1e-12);
  // zero variance -> undefined, reported as null
  EXPECT_FALSE(pearson({1, 2, 3}, {5, 5, 5}).has_value());
  EXPECT_FALSE(pearson({2, 2, 2}, {1, 2, 3}).has_value());
  EXPECT_THROW(pearson({1}, {2}), DataError);
  EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), DataError);
}

TEST(Pearson, MatchesTwoPassReferenceOnRandomData) {
  Rng rng(8);
  std::vector<double> xs, ys;
  for (int i = 0; i < 100; ++i) {
    xs.push_back(rng.uniform(-5, 5));
    ys.push_back(0.3 * xs.back() + rng.normal());
  }
  // independent single-pass computation via expectations
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = 100;
  for (int i = 0; i < 100; ++i) {
    sx += xs[static_cast<std::size_t>(i)];
    sy += ys[static_cast<std::size_t>(i)];
    sxx += xs[static_cast<std::size_t>(i)] * xs[static_cast<std::size_t>(i)];
    syy += ys[static_cast<std::size_t>(i)] * ys[static_cast<std::size_t>(i)];
    sxy += xs[static_cast<std::size_t>(i)] * ys[static_cast<std::size_t>(i)];
  }
  const double ref = (sxy - sx * sy / n) /
                     std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
  EXPECT_NEAR(*pearson(xs, ys), ref, 1e-12);
}

TEST(Csv, EscapingAndSplittingRoundTrip) {
  const std::vector<std::string> fields = {"plain", "with,comma", "with\"quote", ""};
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ",";
    line += csv_escape(fields[i]);
  }
  EXPECT_EQ(csv_split(line), fields);
}

TEST(Csv, ReportRowReimportsLosslessly) {
  SafetyReport r;
  r.model_hash = "abc123";
  r.seed = 42;
  r.clean_error = 0.1234567890123456789;  // exercises shortest-round-trip formatting
  r.mce = 1.0 / 3.0;
  r.auroc = 0.9375;
  const std::string row = report_csv_row(r);
  const auto fields = csv_split(row.substr(0, row.size() - 1));
  const auto names = SafetyReport::metric_names();
  ASSERT_EQ(fields.size(), 2 + names.size());
  EXPECT_EQ(parse_double(fields[2]), *r.clean_error);
  EXPECT_EQ(parse_double(fields[3]), *r.mce);
  EXPECT_TRUE(fields[4].empty());  // mfr unset stays empty
}

TEST(Svg, WellFormedAndDeterministic) {
  SvgSeries s;
  s.label = "J";
  s.color = "#123456";
  s.points = {{0.1, 1.2}, {0.5, 0.8}, {0.9, 1.0}};
  const std::string svg = svg_chart("demo <title>", "order / n", "J", {s});
  EXPECT_NE(svg.find("<?xml"), std::string::npos);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("&lt;title&gt;"), std::string::npos);  // escaped
  EXPECT_EQ(svg_chart("demo <title>", "order / n", "J", {s}), svg);
  // one circle per point plus one legend marker
  std::size_t circles = 0, pos = 0;
  while ((pos = svg.find("<circle", pos)) != std::string::npos) {
    ++circles;
    pos += 7;
  }
  EXPECT_EQ(circles, s.points.size() + 1);
}

TEST(Svg, ProfileChartPlotsEveryOrder) {
  InteractionProfile prof;
  prof.n = 16;
  prof.orders = {1, 3, 5, 8, 11, 14};
  prof.j = {1.5, 1.2, 1.0, 0.9, 0.7, 0.7};
  prof.stderr_.assign(6, 0.0);
  const std::string svg = profile_svg(prof, "profile");
  std::size_t circles = 0, pos = 0;
  while ((pos = svg.find("<circle", pos)) != std::string::npos) {
    ++circles;
    pos += 7;
  }
  EXPECT_EQ(circles, prof.orders.size() + 1);  // points + legend marker
}

namespace {

VariantSummary variant(const std::string& name, double m, double mce) {
  VariantSummary v;
  v.name = name;
  v.m_value = m;
  v.report.mce = mce;
  v.report.clean_error = 0.5;  // constant metric: r must be null
  return v;
}

}  // namespace

TEST(Correlate, AffineMetricGivesUnitCorrelationAndConstantGivesNull) {
  const std::vector<VariantSummary> variants = {variant("a", 1.0, 2.0), variant("b", 2.0, 4.0),
                                                variant("c", 3.0, 6.0)};
  const auto rows = correlate(variants);
  for (const CorrelationRow& row : rows) {
    if (row.metric == "mce") {
      ASSERT_TRUE(row.r.has_value());
      EXPECT_NEAR(*row.r, 1.0, 1e-12);
    } else if (row.metric == "clean_error") {
      EXPECT_FALSE(row.r.has_value());  // zero variance
    }
  }
  EXPECT_THROW(correlate({variant("a", 1, 2), variant("b", 2, 3)}), DataError);
}

TEST(Correlate, CsvListsEveryMetric) {
  const std::vector<VariantSummary> variants = {variant("a", 1.0, 2.0), variant("b", 2.0, 4.1),
                                                variant("c", 3.0, 5.9)};
  const std::string csv = correlation_csv(correlate(variants));
  for (const std::string& name : SafetyReport::metric_names()) {
    EXPECT_NE(csv.find(name), std::string::npos) << name;
  }
}
