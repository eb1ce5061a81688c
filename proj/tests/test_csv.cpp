#include <doctest.h>

#include "cohertrace/errors.hpp"
#include "csv.hpp"

using namespace cohertrace;

TEST_SUITE("csv") {

TEST_CASE("plain and quoted fields") {
  const auto rows = csv::parse("a,b,c\r\n1,\"x, y\",\"say \"\"hi\"\"\"\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == csv::Row{"a", "b", "c"});
  CHECK(rows[1] == csv::Row{"1", "x, y", "say \"hi\""});
}

TEST_CASE("quoted field spanning lines and empty cells") {
  const auto rows = csv::parse("id,text\nt1,\"line one\nline two\"\nt2,\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][1] == "line one\nline two");
  CHECK(rows[2] == csv::Row{"t2", ""});
}

TEST_CASE("missing final newline") { CHECK(csv::parse("a,b\n1,2").size() == 2); }

TEST_CASE("unterminated quote") { CHECK_THROWS_AS(csv::parse("a\n\"open"), Error); }

TEST_CASE("escape and round trip") {
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a,b") == "\"a,b\"");
  CHECK(csv::escape("q\"") == "\"q\"\"\"");
  const csv::Row row{"x", "a,b", "multi\nline", "\"", ""};
  const auto text = csv::format_row(row);
  CHECK(text.substr(text.size() - 2) == "\r\n");
  const auto back = csv::parse(text);
  REQUIRE(back.size() == 1);
  CHECK(back[0] == row);
}

}
