#include <sstream>

#include <gtest/gtest.h>

#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"

using namespace fairaudit;

TEST(Csv, SplitsQuotedFields) {
  auto f = csv::split_row(R"(a,"b,c","d ""e""",)");
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[1], "b,c");
  EXPECT_EQ(f[2], "d \"e\"");
  EXPECT_EQ(f[3], "");
}

TEST(Csv, UnterminatedQuoteThrows) { EXPECT_THROW(csv::split_row("a,\"b"), ValidationError); }

TEST(Csv, EscapeRoundTrips) {
  std::vector<std::string> row = {"plain", "with,comma", "with \"quote\"", " padded ", ""};
  EXPECT_EQ(csv::split_row(csv::join_row(row)), row);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 27.365900143, 1e-300, -4.5, 0.0}) {
    auto back = csv::parse_double(csv::format_double(x));
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, x);
  }
}

TEST(Csv, ParseDoubleRejectsTrailingText) {
  EXPECT_FALSE(csv::parse_double("1.5x"));
  EXPECT_FALSE(csv::parse_double(""));
  EXPECT_EQ(csv::parse_double("2"), 2.0);
}

TEST(Csv, ReaderSkipsCommentsAndCountsLines) {
  std::istringstream in("# format_version=1\nh1,h2\n\n1,2\n");
  csv::Reader reader(in);
  std::vector<std::string> row;
  ASSERT_TRUE(reader.next(row));
  EXPECT_EQ(row[0], "h1");
  EXPECT_EQ(reader.line_number(), 2u);
  ASSERT_TRUE(reader.next(row));
  EXPECT_EQ(row[1], "2");
  EXPECT_EQ(reader.line_number(), 4u);
  EXPECT_FALSE(reader.next(row));
}
