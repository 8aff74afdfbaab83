#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "common/fixtures.hpp"
#include "fairsyn/transport.hpp"

using namespace fairsyn;

namespace {

CompletionRequest demo_request(std::size_t n = 1) {
  CompletionRequest req;
  req.model = "demo-model";
  req.messages = {{"system", "be terse"}, {"user", "produce rows"}};
  req.temperature = 0.4;
  req.n = n;
  return req;
}

}  // namespace

TEST_CASE("request hashes are stable and content-sensitive", "[transport]") {
  const std::string a = request_hash(demo_request());
  const std::string b = request_hash(demo_request());
  CHECK(a == b);
  CHECK(a.size() == 16);
  CHECK(a.find_first_not_of("0123456789abcdef") == std::string::npos);

  CompletionRequest other = demo_request();
  other.messages[1].content += "!";
  CHECK(request_hash(other) != a);
  other = demo_request();
  other.temperature = 0.5;
  CHECK(request_hash(other) != a);
}

TEST_CASE("mock transport serves the per-request file over the default", "[transport]") {
  fixtures::TempDir dir("mock");
  const CompletionRequest req = demo_request();
  fixtures::write_file(dir.file(request_hash(req) + ".txt"), "exact answer\n");
  fixtures::write_file(dir.file("default.txt"), "fallback\n");

  MockTransport mt(dir.path());
  CHECK(mt.complete(req).contents == std::vector<std::string>{"exact answer"});

  CompletionRequest unknown = demo_request();
  unknown.model = "other-model";
  CHECK(mt.complete(unknown).contents == std::vector<std::string>{"fallback"});
  CHECK(mt.name() == "mock");
}

TEST_CASE("mock transport splits completions on separator lines", "[transport]") {
  fixtures::TempDir dir("mock");
  fixtures::write_file(dir.file("default.txt"),
                       "first A\nfirst B\n===\nsecond\n===\nthird\n");
  MockTransport mt(dir.path());

  const CompletionResponse r3 = mt.complete(demo_request(3));
  REQUIRE(r3.contents.size() == 3);
  CHECK(r3.contents[0] == "first A\nfirst B");
  CHECK(r3.contents[1] == "second");
  CHECK(r3.contents[2] == "third");

  // More requested than stored: the last completion repeats.
  const CompletionResponse r5 = mt.complete(demo_request(5));
  REQUIRE(r5.contents.size() == 5);
  CHECK(r5.contents[3] == "third");
  CHECK(r5.contents[4] == "third");
}

TEST_CASE("mock transport without files reports a transport failure", "[transport]") {
  fixtures::TempDir dir("mock");
  MockTransport mt(dir.path());
  CHECK_THROWS_AS(mt.complete(demo_request()), TransportError);
}

TEST_CASE("completion responses are validated structurally", "[transport]") {
  const CompletionResponse ok = parse_completion_response(
      R"({"choices":[{"message":{"content":"hello"}},{"message":{"content":"there"}}]})");
  REQUIRE(ok.contents.size() == 2);
  CHECK(ok.contents[0] == "hello");
  CHECK(ok.contents[1] == "there");

  CHECK_THROWS_AS(parse_completion_response("not json"), MalformedResponseError);
  CHECK_THROWS_AS(parse_completion_response(R"({"choices":[]})"), MalformedResponseError);
  CHECK_THROWS_AS(parse_completion_response(R"({"other":1})"), MalformedResponseError);
  CHECK_THROWS_AS(parse_completion_response(R"({"choices":[{"message":{}}]})"),
                  MalformedResponseError);
}

TEST_CASE("endpoint urls parse into host, port and path", "[transport]") {
  HttpEndpoint ep = parse_endpoint("http://localhost:8080/v1/chat/completions");
  CHECK(ep.host == "localhost");
  CHECK(ep.port == 8080);
  CHECK(ep.path == "/v1/chat/completions");

  ep = parse_endpoint("api.example.test");
  CHECK(ep.host == "api.example.test");
  CHECK(ep.port == 80);
  CHECK(ep.path == "/v1/chat/completions");

  CHECK_THROWS_AS(parse_endpoint("https://api.example.test/v1"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint("http:///v1"), ConfigError);
}

TEST_CASE("http transport requires its configured key variable", "[transport]") {
  HttpTransport t("http://localhost:9/nope", "FAIRSYN_TEST_KEY_THAT_IS_UNSET");
  CHECK_THROWS_AS(t.complete(demo_request()), ConfigError);
  CHECK(t.name() == "http");
}
