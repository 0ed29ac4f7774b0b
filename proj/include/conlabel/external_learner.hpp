#pragma once

#include <sys/types.h>
#include <sys/wait.h>

#include <csignal>
#include <cstdio>
#include <memory>
#include <string>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "conlabel/common.hpp"
#include "conlabel/learner.hpp"

// Adapter that runs a classifier as a child process speaking line-delimited
// JSON on stdin/stdout:
//   -> {"op":"hello"}                          <- {"ok":true,"dim":d,"classes":K}
//   -> {"op":"fit","train":[{"x":[..],"y":c},..],"val":[..],"epochs":n,"config":{..}}
//                                              <- {"ok":true,"best_epoch":e,"val_acc":a}
//   -> {"op":"predict","instances":[[..],..]}  <- {"ok":true,"probs":[[..],..]}
// Requests and replies strictly alternate, one JSON document per line. A reply
// of {"ok":false,"error":msg} aborts with a diagnosed error.

namespace conlabel::learner {

namespace detail {

class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) : command_(command) {
    // a dead child must surface as a write/read error, not a fatal signal
    static const bool sigpipe_ignored = [] {
      std::signal(SIGPIPE, SIG_IGN);
      return true;
    }();
    (void)sigpipe_ignored;

    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      fail(ErrorCode::ExternalLearnerFailure, "pipe() failed for '" + command + "'");
    pid_ = fork();
    if (pid_ < 0) fail(ErrorCode::ExternalLearnerFailure, "fork() failed for '" + command + "'");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (!in_ || !out_)
      fail(ErrorCode::ExternalLearnerFailure, "fdopen() failed for '" + command + "'");
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    if (in_) fclose(in_);
    if (out_) fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 200; ++i) {  // ~2s grace after stdin closes
        if (waitpid(pid_, &status, WNOHANG) != 0) return;
        usleep(10000);
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
  }

  void write_line(const std::string& line) {
    if (fputs(line.c_str(), in_) == EOF || fputc('\n', in_) == EOF || fflush(in_) != 0)
      fail(ErrorCode::ExternalLearnerFailure,
           "external learner '" + command_ + "' is not accepting requests");
  }

  std::string read_line() {
    std::string line;
    int ch;
    while ((ch = fgetc(out_)) != EOF) {
      if (ch == '\n') return line;
      line.push_back(static_cast<char>(ch));
    }
    fail(ErrorCode::ProtocolError,
         "external learner '" + command_ + "' closed its output mid-protocol");
  }

  const std::string& command() const { return command_; }

 private:
  std::string command_;
  pid_t pid_ = -1;
  FILE* in_ = nullptr;
  FILE* out_ = nullptr;
};

}  // namespace detail

class ExternalLearner : public Learner {
 public:
  ExternalLearner(const std::string& command, size_t expected_dim, int expected_classes)
      : child_(command), dim_(expected_dim), classes_(expected_classes) {
    json reply = exchange({{"op", "hello"}}, "hello");
    size_t dim = reply.value("dim", size_t{0});
    int classes = reply.value("classes", 0);
    if (dim != expected_dim || classes != expected_classes)
      fail(ErrorCode::ExternalLearnerFailure,
           "external learner '" + command + "' declared dim=" + std::to_string(dim) +
               " classes=" + std::to_string(classes) + ", pipeline expects dim=" +
               std::to_string(expected_dim) + " classes=" + std::to_string(expected_classes));
  }

  size_t feature_dim() const override { return dim_; }
  int num_classes() const override { return classes_; }

  FitResult fit(const Examples& train, const Examples& val, int epochs,
                const LearnerConfig& cfg) override {
    cfg.validate();
    if (train.size() == 0) fail(ErrorCode::EmptyTrainingSet, "fit on an empty training set");
    json request;
    request["op"] = "fit";
    request["train"] = encode_examples(train);
    request["val"] = encode_examples(val);
    request["epochs"] = epochs;
    request["config"] = {{"learning_rate", cfg.learning_rate}, {"decay", cfg.decay},
                         {"beta1", cfg.beta1},                 {"beta2", cfg.beta2},
                         {"batch_size", cfg.batch_size},       {"epsilon", cfg.epsilon},
                         {"seed", cfg.seed}};
    json reply = exchange(request, "fit");
    FitResult result;
    result.best_epoch = reply.value("best_epoch", 0);
    result.best_val_accuracy = reply.value("val_acc", 0.0);
    return result;
  }

  Matrix predict_proba(const Matrix& x) override {
    if (x.cols != dim_)
      fail(ErrorCode::DimensionMismatch, "input dimension " + std::to_string(x.cols) +
                                             ", learner dimension " + std::to_string(dim_));
    json request;
    request["op"] = "predict";
    json rows = json::array();
    for (size_t i = 0; i < x.rows; ++i)
      rows.push_back(std::vector<double>(x.row(i).begin(), x.row(i).end()));
    request["instances"] = std::move(rows);
    json reply = exchange(request, "predict");
    Matrix probs(x.rows, static_cast<size_t>(classes_));
    const json& out = reply.at("probs");
    if (!out.is_array() || out.size() != x.rows)
      fail(ErrorCode::ProtocolError, diagnose("predict", "wrong number of probability rows"));
    for (size_t i = 0; i < x.rows; ++i) {
      std::vector<double> row = out[i].get<std::vector<double>>();
      if (row.size() != static_cast<size_t>(classes_) || !is_probability_vector(row))
        fail(ErrorCode::ExternalLearnerFailure,
             diagnose("predict", "row " + std::to_string(i) + " is not a probability vector"));
      std::copy(row.begin(), row.end(), probs.row(i).begin());
    }
    return probs;
  }

 private:
  using json = nlohmann::ordered_json;

  std::string diagnose(const std::string& op, const std::string& what) const {
    return "external learner '" + child_.command() + "', op '" + op + "': " + what;
  }

  json encode_examples(const Examples& ex) {
    json arr = json::array();
    for (size_t i = 0; i < ex.size(); ++i) {
      json item;
      item["x"] = std::vector<double>(ex.x.row(i).begin(), ex.x.row(i).end());
      item["y"] = ex.y[i];
      arr.push_back(std::move(item));
    }
    return arr;
  }

  json exchange(const json& request, const std::string& op) {
    child_.write_line(request.dump());
    std::string line = child_.read_line();
    json reply;
    try {
      reply = json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::ProtocolError, diagnose(op, "reply is not a JSON document: " + line));
    }
    if (!reply.is_object() || !reply.contains("ok"))
      fail(ErrorCode::ProtocolError, diagnose(op, "reply lacks an \"ok\" field"));
    if (!reply.at("ok").get<bool>())
      fail(ErrorCode::ExternalLearnerFailure,
           diagnose(op, reply.value("error", std::string("unspecified error"))));
    return reply;
  }

  detail::ChildProcess child_;
  size_t dim_;
  int classes_;
};

}  // namespace conlabel::learner
