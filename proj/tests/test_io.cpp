#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "edr/config.hpp"
#include "edr/csv.hpp"

TEST_CASE("config parsing: dotted keys, comments, trimming") {
  std::istringstream in(
      "# comment line\n"
      "simulate.model = 1\n"
      "simulate.tau = 1, 0, 0, 0\n"
      "\n"
      "seed=42   # trailing comment\n"
      "out.dir = results/run a\n");
  const edr::Config cfg = edr::parse_config(in);
  CHECK(cfg.get_int("simulate.model") == 1);
  CHECK(cfg.get_int("seed") == 42);
  CHECK(cfg.get("out.dir") == "results/run a");
  const auto tau = cfg.get_list("simulate.tau");
  REQUIRE(tau.size() == 4);
  CHECK(tau[0] == "1");
  CHECK(tau[3] == "0");
  CHECK(cfg.get_or("absent", "fallback") == "fallback");
  CHECK(!cfg.has("absent"));
}

TEST_CASE("config errors carry machine-parseable codes") {
  std::istringstream missing_eq("justakey\n");
  CHECK_THROWS_WITH_AS(edr::parse_config(missing_eq),
                       doctest::Contains("config-parse-error"),
                       std::runtime_error);
  std::istringstream empty_key("= value\n");
  CHECK_THROWS_WITH_AS(edr::parse_config(empty_key),
                       doctest::Contains("config-parse-error"),
                       std::runtime_error);
  edr::Config cfg;
  cfg.set("n", "12x");
  CHECK_THROWS_WITH_AS(cfg.get_int("n"), doctest::Contains("config-bad-integer"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.get("gone"), doctest::Contains("config-missing-key"),
                       std::runtime_error);
}

TEST_CASE("later config assignments win, as with CLI overrides") {
  std::istringstream in("a = 1\na = 2\n");
  CHECK(edr::parse_config(in).get_int("a") == 2);
}

TEST_CASE("csv round trip with quoting") {
  edr::CsvTable table;
  table.header = {"name", "value", "note"};
  table.rows.push_back({"plain", "1.5", "ok"});
  table.rows.push_back({"with,comma", "2", "say \"hi\""});
  table.rows.push_back({"missing", "NA", ""});
  const std::string text = edr::write_csv(table);
  std::istringstream in(text);
  const edr::CsvTable back = edr::read_csv(in);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.header == table.header);
  CHECK(back.rows[1][0] == "with,comma");
  CHECK(back.rows[1][2] == "say \"hi\"");
  CHECK(edr::csv_is_missing(back.rows[2][1]));
  CHECK(edr::csv_is_missing(back.rows[2][2]));
  CHECK(!edr::csv_is_missing(back.rows[0][1]));
  CHECK(back.column("note") == 2);
  CHECK_THROWS_WITH_AS(back.column("ghost"), doctest::Contains("csv-missing-column"),
                       std::runtime_error);
}

TEST_CASE("csv structural errors") {
  std::istringstream ragged("a,b\n1,2,3\n");
  CHECK_THROWS_WITH_AS(edr::read_csv(ragged), doctest::Contains("csv-ragged-row"),
                       std::runtime_error);
  std::istringstream empty("");
  CHECK_THROWS_WITH_AS(edr::read_csv(empty), doctest::Contains("csv-empty"),
                       std::runtime_error);
  std::istringstream open_quote("a\n\"unclosed\n");
  CHECK_THROWS_AS(edr::read_csv(open_quote), std::runtime_error);
  CHECK_THROWS_WITH_AS(edr::csv_to_double("1.2.3"),
                       doctest::Contains("csv-bad-number"), std::runtime_error);
  CHECK(edr::csv_to_double("-3.25") == -3.25);
}

TEST_CASE("crlf input is tolerated") {
  std::istringstream in("a,b\r\n1,2\r\n");
  const edr::CsvTable table = edr::read_csv(in);
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0][1] == "2");
}
