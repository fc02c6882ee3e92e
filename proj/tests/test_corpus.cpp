#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "protospace/corpus.hpp"
#include "protospace/embed_client.hpp"
#include "protospace/errors.hpp"

using namespace protospace;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static const fs::path dir = [] {
        auto p = fs::temp_directory_path() /
                 ("protospace-corpus-" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
    return s;
}

// Deterministic per-text vector used by the stub service, pre-normalization.
std::vector<double> stub_vector(const std::string& text) {
    double acc = 0.0;
    for (unsigned char ch : text) acc += static_cast<double>(ch);
    return {acc + 1.0, 2.0, -3.0};
}

// Minimal in-process embedding service.
struct StubService {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> requests{0};
    std::atomic<int> fail_first_n{0};
    std::atomic<bool> short_reply{false};
    std::string last_auth;
    std::string last_model;
    std::mutex mu;

    void start() {
        server.Post("/v1/embeddings", [this](const httplib::Request& req,
                                             httplib::Response& res) {
            const int n = ++requests;
            {
                std::lock_guard<std::mutex> lock(mu);
                last_auth = req.get_header_value("Authorization");
            }
            if (n <= fail_first_n.load()) {
                res.status = 500;
                res.set_content("boom", "text/plain");
                return;
            }
            const auto body = nlohmann::json::parse(req.body);
            {
                std::lock_guard<std::mutex> lock(mu);
                last_model = body.value("model", "");
            }
            nlohmann::json data = nlohmann::json::array();
            for (const auto& text : body["input"]) {
                nlohmann::json item;
                item["embedding"] = stub_vector(text.get<std::string>());
                data.push_back(item);
            }
            if (short_reply.load() && !data.empty()) data.erase(data.size() - 1);
            nlohmann::json reply;
            reply["data"] = data;
            res.set_content(reply.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~StubService() {
        server.stop();
        if (thread.joinable()) thread.join();
    }

    EmbedServiceConfig config() const {
        EmbedServiceConfig cfg;
        cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) +
                       "/v1/embeddings";
        cfg.model = "stub-model";
        cfg.backoff_base_seconds = 0.005;
        return cfg;
    }
};

}  // namespace

TEST_CASE("verbalize_entity") {
    CHECK(verbalize_entity("banana", std::string("food item")) ==
          "food item banana");
    CHECK(verbalize_entity("banana", std::nullopt) == "banana");
    CHECK(verbalize_entity("banana", std::string("")) == "banana");
    CHECK_THROWS_AS(verbalize_entity("", std::string("food item")), InputError);
}

TEST_CASE("eol_prompt is byte-exact") {
    const std::string got = eol_prompt("banana");
    const char expected[] =
        "The description of the term \x27" "banana" "\x27 in one word is";
    CHECK(got.size() == sizeof(expected) - 1);
    CHECK(std::memcmp(got.data(), expected, got.size()) == 0);
    CHECK(got.back() == 's');  // no trailing whitespace or newline

    CHECK(eol_prompt(verbalize_entity("banana", std::string("food item"))) ==
          "The description of the term 'food item banana' in one word is");
    CHECK_THROWS_AS(eol_prompt(""), InputError);
}

TEST_CASE("embedding store invariants") {
    EmbeddingStore store;
    CHECK(store.dim() == 0);
    store.add({"a", "text a", EmbeddingVector({1.0, 2.0})});
    CHECK(store.dim() == 2);
    CHECK(store.contains("a"));
    CHECK(store.vector_for("a")[1] == 2.0);
    CHECK(store.find("a")->text == "text a");
    CHECK_THROWS_AS(store.vector_for("missing"), LookupError);
    CHECK_THROWS_AS(store.add({"a", "again", EmbeddingVector({3.0, 4.0})}),
                    SchemaError);
    CHECK_THROWS_AS(store.add({"b", "bad dim", EmbeddingVector({1.0, 2.0, 3.0})}),
                    DimensionError);
}

TEST_CASE("embeddings JSONL round-trips at full precision") {
    EmbeddingStore store;
    const std::vector<double> tricky = {0.1,
                                        1.0 / 3.0,
                                        3.141592653589793,
                                        -1e-308,
                                        98765432109876.5,
                                        -0.0};
    store.add({"first", "prompt one", EmbeddingVector(tricky)});
    store.add({"second", "prompt two",
               EmbeddingVector({1e300, -2.5e-17, 42.0, 0.0, 1.0, 2.0})});

    const auto path = temp_dir() / "roundtrip.jsonl";
    save_embeddings(store, path.string());
    const EmbeddingStore loaded = load_embeddings(path.string());

    REQUIRE(loaded.size() == 2);
    CHECK(loaded.records()[0].id == "first");  // insertion order preserved
    CHECK(loaded.records()[1].id == "second");
    CHECK(loaded.find("first")->text == "prompt one");
    const auto& v = loaded.vector_for("first");
    REQUIRE(v.dim() == tricky.size());
    CHECK(std::memcmp(v.values.data(), tricky.data(),
                      tricky.size() * sizeof(double)) == 0);

    // saving the loaded store reproduces the file byte for byte
    const auto path2 = temp_dir() / "roundtrip2.jsonl";
    save_embeddings(loaded, path2.string());
    CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("load_embeddings rejects malformed input with line numbers") {
    const auto path = temp_dir() / "bad.jsonl";

    write_file(path, "{\"id\":\"a\",\"text\":\"t\",\"vector\":[1,2]}\nnot json\n");
    try {
        load_embeddings(path.string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }

    write_file(path,
               "{\"id\":\"a\",\"text\":\"t\",\"vector\":[1,2]}\n"
               "{\"id\":\"b\",\"text\":\"t\",\"vector\":[1,2,3]}\n");
    CHECK_THROWS_AS(load_embeddings(path.string()), DimensionError);

    write_file(path,
               "{\"id\":\"a\",\"text\":\"t\",\"vector\":[1,2]}\n"
               "{\"id\":\"a\",\"text\":\"t\",\"vector\":[3,4]}\n");
    CHECK_THROWS_AS(load_embeddings(path.string()), SchemaError);

    CHECK_THROWS_AS(load_embeddings((temp_dir() / "nope.jsonl").string()),
                    IoError);
}

TEST_CASE("classification dataset loading") {
    const auto path = temp_dir() / "class.json";
    const std::string strict = R"([{
        "target": "long river",
        "examples": ["Nile", "Amazon", "Yangtze", "Yenisei", "Yellow River",
                     "Ob-Irtysh", "Congo"],
        "negatives": ["short river", "polluted river", "dry river",
                      "small city"],
        "category": "river"
    }])";
    write_file(path, strict);
    const auto items = load_classification_dataset(path.string());
    REQUIRE(items.size() == 1);
    CHECK(items[0].target == "long river");
    CHECK(items[0].examples.size() == 7);
    CHECK(items[0].negatives.size() == 4);
    CHECK(items[0].category == "river");

    // six examples: fails strict, fails relax=false only
    const std::string six = R"([{
        "target": "t",
        "examples": ["a", "b", "c", "d", "e", "f"],
        "negatives": ["n1", "n2", "n3", "n4"]
    }])";
    write_file(path, six);
    CHECK_THROWS_AS(load_classification_dataset(path.string()), SchemaError);
    CHECK(load_classification_dataset(path.string(), true).size() == 1);

    // below even the relaxed floor
    const std::string tiny = R"([{
        "target": "t", "examples": ["a"], "negatives": ["n"]
    }])";
    write_file(path, tiny);
    CHECK_THROWS_AS(load_classification_dataset(path.string(), true),
                    SchemaError);

    // duplicate string inside one record
    const std::string dup = R"([{
        "target": "t",
        "examples": ["a", "b", "c", "d", "e", "f", "a"],
        "negatives": ["n1", "n2", "n3", "n4"]
    }])";
    write_file(path, dup);
    CHECK_THROWS_AS(load_classification_dataset(path.string()), SchemaError);

    // negative equal to the target
    const std::string clash = R"([{
        "target": "n1",
        "examples": ["a", "b", "c", "d", "e", "f", "g"],
        "negatives": ["n1", "n2", "n3", "n4"]
    }])";
    write_file(path, clash);
    CHECK_THROWS_AS(load_classification_dataset(path.string()), SchemaError);

    write_file(path, "[{\"target\": 3}]");
    CHECK_THROWS_AS(load_classification_dataset(path.string()), SchemaError);
    write_file(path, "{");
    CHECK_THROWS_AS(load_classification_dataset(path.string()), ParseError);
}

TEST_CASE("ratings CSV") {
    const auto path = temp_dir() / "ratings.csv";
    write_file(path,
               "item,dimension,rating\n"
               "banana,sweetness,0.81\n"
               "\"beans, baked\",sweetness,0.35\n"
               "banana,sourness,0.12\n");
    const RatingsTable t = load_ratings(path.string());
    CHECK(t.size() == 3);
    CHECK(t.rating("banana", "sweetness") == 0.81);
    CHECK(t.rating("beans, baked", "sweetness") == 0.35);
    CHECK(!t.rating("banana", "umaminess").has_value());
    const auto dims = t.dimensions();
    REQUIRE(dims.size() == 2);
    CHECK(dims[0] == "sourness");
    CHECK(dims[1] == "sweetness");
    const auto rows = t.rows_for("sweetness");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].item == "banana");  // sorted by item

    write_file(path,
               "item,dimension,rating\n"
               "banana,sweetness,0.81\n"
               "banana,sweetness,0.90\n");
    CHECK_THROWS_AS(load_ratings(path.string()), SchemaError);

    write_file(path, "item,dimension,rating\nbanana,sweetness,very\n");
    CHECK_THROWS_AS(load_ratings(path.string()), ParseError);

    write_file(path, "item,score\nbanana,1\n");
    CHECK_THROWS_AS(load_ratings(path.string()), SchemaError);
}

TEST_CASE("pairs CSV") {
    const auto path = temp_dir() / "pairs.csv";
    write_file(path,
               "item_a,item_b,dimension,label\n"
               "banana,lemon,sweetness,1\n"
               "lemon,banana,sourness,+1\n"
               "cheese,honey,sweetness,-1\n");
    const auto pairs = load_pairs(path.string());
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].label == 1);
    CHECK(pairs[1].label == 1);
    CHECK(pairs[2].label == -1);
    CHECK(pairs[2].item_a == "cheese");

    const auto path2 = temp_dir() / "pairs2.csv";
    save_pairs(pairs, path2.string());
    const auto again = load_pairs(path2.string());
    REQUIRE(again.size() == 3);
    CHECK(again[1].item_a == "lemon");
    CHECK(again[1].label == 1);

    write_file(path, "item_a,item_b,dimension,label\na,b,s,2\n");
    CHECK_THROWS_AS(load_pairs(path.string()), SchemaError);
    write_file(path, "item_a,item_b,dimension,label\na,b,s,maybe\n");
    CHECK_THROWS_AS(load_pairs(path.string()), ParseError);
    write_file(path, "item_a,item_b,dimension,label\na,a,s,1\n");
    CHECK_THROWS_AS(load_pairs(path.string()), SchemaError);
}

TEST_CASE("fetch_embeddings: normalization, order, batching") {
    StubService stub;
    stub.start();
    EmbedServiceConfig cfg = stub.config();
    cfg.batch_size = 2;
    cfg.api_key = "sekrit";

    const std::vector<std::string> texts = {"alpha", "bravo", "charlie",
                                            "delta", "echo"};
    const auto got = fetch_embeddings(texts, cfg);
    REQUIRE(got.size() == texts.size());
    CHECK(stub.requests.load() == 3);  // ceil(5 / 2)
    {
        std::lock_guard<std::mutex> lock(stub.mu);
        CHECK(stub.last_auth == "Bearer sekrit");
        CHECK(stub.last_model == "stub-model");
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto expected = normalize(EmbeddingVector(stub_vector(texts[i])));
        CHECK(got[i].unit_norm);
        REQUIRE(got[i].dim() == expected.dim());
        for (std::size_t j = 0; j < expected.dim(); ++j) {
            CHECK(got[i][j] == doctest::Approx(expected[j]).epsilon(1e-15));
        }
    }
}

TEST_CASE("fetch_embeddings: order preserved under concurrency") {
    StubService stub;
    stub.start();
    EmbedServiceConfig cfg = stub.config();
    cfg.batch_size = 1;
    cfg.max_concurrency = 4;

    std::vector<std::string> texts;
    for (int i = 0; i < 64; ++i) texts.push_back("text-" + std::to_string(i));
    const auto got = fetch_embeddings(texts, cfg);
    REQUIRE(got.size() == texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto expected = normalize(EmbeddingVector(stub_vector(texts[i])));
        CHECK(got[i][0] == doctest::Approx(expected[0]).epsilon(1e-15));
    }
}

TEST_CASE("fetch_embeddings: bounded retry then success") {
    StubService stub;
    stub.start();
    stub.fail_first_n = 2;
    const auto got = fetch_embeddings({"alpha"}, stub.config());
    CHECK(got.size() == 1);
    CHECK(stub.requests.load() == 3);
}

TEST_CASE("fetch_embeddings: ServiceError after retries exhausted") {
    StubService stub;
    stub.start();
    stub.fail_first_n = 1000;
    EmbedServiceConfig cfg = stub.config();
    cfg.max_retries = 1;
    try {
        fetch_embeddings({"alpha"}, cfg);
        FAIL("expected ServiceError");
    } catch (const ServiceError& e) {
        CHECK(std::string(e.what()).find("500") != std::string::npos);
    }
    CHECK(stub.requests.load() == 2);  // initial + 1 retry
}

TEST_CASE("fetch_embeddings: count mismatch is a protocol violation") {
    StubService stub;
    stub.start();
    stub.short_reply = true;
    CHECK_THROWS_AS(fetch_embeddings({"alpha", "bravo"}, stub.config()),
                    ProtocolError);
    CHECK(stub.requests.load() == 1);  // no retry on contract violations
}

TEST_CASE("fetch_embeddings: input validation") {
    EmbedServiceConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1/v1/embeddings";
    CHECK_THROWS_AS(fetch_embeddings({}, cfg), InputError);
    cfg.endpoint = "";
    CHECK_THROWS_AS(fetch_embeddings({"x"}, cfg), ConfigError);
}

TEST_CASE("EmbedServiceConfig::from_env") {
    setenv("PROTOSPACE_EMBED_URL", "http://example.test/v1/embeddings", 1);
    setenv("PROTOSPACE_EMBED_KEY", "k", 1);
    setenv("PROTOSPACE_EMBED_MODEL", "m", 1);
    const auto cfg = EmbedServiceConfig::from_env();
    CHECK(cfg.endpoint == "http://example.test/v1/embeddings");
    CHECK(cfg.api_key == "k");
    CHECK(cfg.model == "m");
    unsetenv("PROTOSPACE_EMBED_URL");
    unsetenv("PROTOSPACE_EMBED_KEY");
    unsetenv("PROTOSPACE_EMBED_MODEL");
}
