#include "clood/clood.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "clood/checkpoint.hpp"
#include "clood/config.hpp"
#include "clood/errors.hpp"
#include "clood/log.hpp"
#include "clood/network.hpp"
#include "clood/pipeline.hpp"
#include "clood/replay.hpp"

struct clood_config {
  clood::ExperimentConfig value;
};
struct clood_dataset {
  clood::Dataset value;
};
struct clood_network {
  clood::nn::Network<float> value;
};
struct clood_reservoir {
  clood::ReservoirBuffer value;
};

namespace {

thread_local std::string g_last_error;

clood_status fail(clood_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

// Maps the exception hierarchy onto status codes.
template <typename F>
clood_status guard(F&& f) {
  try {
    return f();
  } catch (const clood::DomainError& e) {
    return fail(CLOOD_ERR_INVALID_ARGUMENT, e.what());
  } catch (const clood::ConfigError& e) {
    return fail(CLOOD_ERR_CONFIG, e.what());
  } catch (const clood::IoError& e) {
    return fail(CLOOD_ERR_IO, e.what());
  } catch (const clood::NotFoundError& e) {
    return fail(CLOOD_ERR_NOT_FOUND, e.what());
  } catch (const clood::RunFailure& e) {
    return fail(CLOOD_ERR_RUN_FAILED, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CLOOD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CLOOD_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define CLOOD_REQUIRE(ptr) \
  if (!(ptr)) return fail(CLOOD_ERR_INVALID_ARGUMENT, #ptr " must not be null")

}  // namespace

extern "C" {

const char* clood_version(void) { return "0.1.0"; }

const char* clood_status_name(clood_status status) {
  switch (status) {
    case CLOOD_OK: return "ok";
    case CLOOD_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case CLOOD_ERR_CONFIG: return "config_error";
    case CLOOD_ERR_IO: return "io_error";
    case CLOOD_ERR_NOT_FOUND: return "not_found";
    case CLOOD_ERR_RUN_FAILED: return "run_failed";
    case CLOOD_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* clood_last_error(void) { return g_last_error.c_str(); }

void clood_string_free(char* s) { std::free(s); }

clood_status clood_set_log_level(int level) {
  if (level < 0 || level > 4) return fail(CLOOD_ERR_INVALID_ARGUMENT, "log level must be in [0,4]");
  clood::log::set_level(static_cast<clood::log::Level>(level));
  return CLOOD_OK;
}

clood_status clood_config_default(clood_config** out) {
  CLOOD_REQUIRE(out);
  return guard([&] {
    *out = new clood_config{};
    return CLOOD_OK;
  });
}

clood_status clood_config_load(const char* path, clood_config** out) {
  CLOOD_REQUIRE(path);
  CLOOD_REQUIRE(out);
  return guard([&] {
    *out = new clood_config{clood::load_config(path)};
    return CLOOD_OK;
  });
}

clood_status clood_config_parse(const char* text, int is_json, clood_config** out) {
  CLOOD_REQUIRE(text);
  CLOOD_REQUIRE(out);
  return guard([&] {
    nlohmann::json j;
    if (is_json) {
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw clood::ConfigError(e.what());
      }
    } else {
      j = clood::parse_config_text(text);
    }
    *out = new clood_config{clood::ExperimentConfig::from_json(j)};
    return CLOOD_OK;
  });
}

clood_status clood_config_set_seed(clood_config* cfg, uint64_t seed) {
  CLOOD_REQUIRE(cfg);
  cfg->value.training.seeds = {seed};
  return CLOOD_OK;
}

clood_status clood_config_to_json(const clood_config* cfg, char** json_out) {
  CLOOD_REQUIRE(cfg);
  CLOOD_REQUIRE(json_out);
  return guard([&] {
    *json_out = dup_string(cfg->value.to_json().dump(2));
    return CLOOD_OK;
  });
}

void clood_config_free(clood_config* cfg) { delete cfg; }

clood_status clood_run_command(const char* command, const clood_config* cfg, const clood_run_options* options,
                               char** result_json) {
  CLOOD_REQUIRE(command);
  CLOOD_REQUIRE(cfg);
  CLOOD_REQUIRE(result_json);
  *result_json = nullptr;
  return guard([&] {
    namespace pl = clood::pipeline;
    pl::Options opt;
    opt.config = cfg->value;
    std::optional<std::string> flag;
    const char* env = nullptr;
    if (options) {
      if (options->out_flag) flag = options->out_flag;
      env = options->out_env;
      opt.jobs = options->jobs < 1 ? 1 : options->jobs;
      opt.dry_run = options->dry_run != 0;
    }
    opt.out = pl::resolve_output(flag, env, cfg->value);
    const std::string cmd = command;
    nlohmann::json result;
    if (cmd == "generate") {
      result = pl::cmd_generate(opt);
    } else if (cmd == "train") {
      result = pl::cmd_train(opt);
    } else if (cmd == "probe") {
      result = pl::cmd_probe(opt);
    } else if (cmd == "report") {
      result = pl::cmd_report(opt);
    } else {
      throw clood::DomainError("unknown command '" + cmd + "' (generate, train, probe, report)");
    }
    result["out"] = opt.out.string();
    *result_json = dup_string(result.dump());
    return CLOOD_OK;
  });
}

clood_status clood_dataset_generate(const clood_config* cfg, clood_dataset** out) {
  CLOOD_REQUIRE(cfg);
  CLOOD_REQUIRE(out);
  return guard([&] {
    *out = new clood_dataset{clood::render_dataset(cfg->value.dataset.counts, cfg->value.dataset.seed)};
    return CLOOD_OK;
  });
}

clood_status clood_dataset_load(const char* dir, clood_dataset** out) {
  CLOOD_REQUIRE(dir);
  CLOOD_REQUIRE(out);
  return guard([&] {
    *out = new clood_dataset{clood::Dataset::load(dir)};
    return CLOOD_OK;
  });
}

clood_status clood_dataset_save(const clood_dataset* ds, const char* dir) {
  CLOOD_REQUIRE(ds);
  CLOOD_REQUIRE(dir);
  return guard([&] {
    ds->value.save(dir);
    return CLOOD_OK;
  });
}

size_t clood_dataset_size(const clood_dataset* ds) { return ds ? ds->value.size() : 0; }

clood_status clood_dataset_image(const clood_dataset* ds, size_t index, float* pixels, size_t capacity) {
  CLOOD_REQUIRE(ds);
  CLOOD_REQUIRE(pixels);
  if (index >= ds->value.size()) return fail(CLOOD_ERR_INVALID_ARGUMENT, "image index out of range");
  if (capacity < clood::glyph::kPixels) return fail(CLOOD_ERR_INVALID_ARGUMENT, "pixel buffer smaller than 1024");
  const auto img = ds->value.image(index);
  std::copy(img.begin(), img.end(), pixels);
  return CLOOD_OK;
}

clood_status clood_dataset_labels(const clood_dataset* ds, size_t index, uint8_t* char_id, uint8_t* font_id) {
  CLOOD_REQUIRE(ds);
  if (index >= ds->value.size()) return fail(CLOOD_ERR_INVALID_ARGUMENT, "label index out of range");
  const auto& l = ds->value.labels(index);
  if (char_id) *char_id = l.char_id;
  if (font_id) *font_id = l.font_id;
  return CLOOD_OK;
}

clood_status clood_dataset_content_hash(const clood_dataset* ds, char** hash_out) {
  CLOOD_REQUIRE(ds);
  CLOOD_REQUIRE(hash_out);
  return guard([&] {
    *hash_out = dup_string(ds->value.content_hash());
    return CLOOD_OK;
  });
}

void clood_dataset_free(clood_dataset* ds) { delete ds; }

clood_status clood_network_create(uint64_t seed, clood_network** out) {
  CLOOD_REQUIRE(out);
  return guard([&] {
    auto net = std::make_unique<clood_network>();
    clood::nn::init_params(net->value, seed);
    *out = net.release();
    return CLOOD_OK;
  });
}

clood_status clood_network_load(const char* checkpoint_path, clood_network** out) {
  CLOOD_REQUIRE(checkpoint_path);
  CLOOD_REQUIRE(out);
  return guard([&] {
    *out = new clood_network{clood::nn::load_checkpoint<float>(checkpoint_path).net};
    return CLOOD_OK;
  });
}

size_t clood_network_parameter_count(const clood_network* net) { return net ? net->value.parameter_count() : 0; }

clood_status clood_network_features(const clood_network* net, const float* images, size_t n, const char* tap,
                                    float* features, size_t capacity, size_t* width) {
  CLOOD_REQUIRE(net);
  CLOOD_REQUIRE(tap);
  CLOOD_REQUIRE(width);
  if (n == 0) return fail(CLOOD_ERR_INVALID_ARGUMENT, "n must be >= 1");
  CLOOD_REQUIRE(images);
  return guard([&] {
    const int s = clood::glyph::kImageSize;
    clood::nn::Tensor<float> batch({static_cast<int>(n), s, s, 1});
    std::copy(images, images + n * clood::glyph::kPixels, batch.ptr());
    const auto f = net->value.features(batch, tap);
    *width = static_cast<size_t>(f.shape[1]);
    if (!features) return CLOOD_OK;
    if (capacity < f.size()) return fail(CLOOD_ERR_INVALID_ARGUMENT, "feature buffer too small");
    std::copy(f.data.begin(), f.data.end(), features);
    return CLOOD_OK;
  });
}

void clood_network_free(clood_network* net) { delete net; }

clood_status clood_reservoir_create(size_t capacity, uint64_t seed, clood_reservoir** out) {
  CLOOD_REQUIRE(out);
  return guard([&] {
    *out = new clood_reservoir{clood::ReservoirBuffer(capacity, seed)};
    return CLOOD_OK;
  });
}

clood_status clood_reservoir_observe(clood_reservoir* r, uint64_t index) {
  CLOOD_REQUIRE(r);
  return guard([&] {
    r->value.observe({static_cast<std::size_t>(index), 0, 0});
    return CLOOD_OK;
  });
}

size_t clood_reservoir_size(const clood_reservoir* r) { return r ? r->value.size() : 0; }

uint64_t clood_reservoir_seen(const clood_reservoir* r) { return r ? r->value.seen() : 0; }

clood_status clood_reservoir_items(const clood_reservoir* r, uint64_t* indices, size_t capacity, size_t* count) {
  CLOOD_REQUIRE(r);
  CLOOD_REQUIRE(count);
  const auto& slots = r->value.slots();
  *count = slots.size();
  if (!indices) return CLOOD_OK;
  const size_t n = std::min(capacity, slots.size());
  for (size_t i = 0; i < n; ++i) indices[i] = slots[i].index;
  return CLOOD_OK;
}

void clood_reservoir_free(clood_reservoir* r) { delete r; }

}  // extern "C"
