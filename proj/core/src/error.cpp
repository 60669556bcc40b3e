#include "debias/error.hpp"

namespace debias {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::LabelVectorMismatch: return "LabelVectorMismatch";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::IoFailure: return "IoFailure";
    case Errc::MissingTypes: return "MissingTypes";
    case Errc::EndpointUnreachable: return "EndpointUnreachable";
    case Errc::Timeout: return "Timeout";
    case Errc::RetriesExhausted: return "RetriesExhausted";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::NoUsableVotes: return "NoUsableVotes";
    case Errc::IdMismatch: return "IdMismatch";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

namespace {

std::string compose(Errc code, const std::string& subject, const std::string& detail) {
  std::string out(to_string(code));
  if (!subject.empty()) {
    out += '(';
    out += subject;
    out += ')';
  }
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

}  // namespace

Error::Error(Errc code, std::string subject, const std::string& detail)
    : std::runtime_error(compose(code, subject, detail)),
      code_(code),
      subject_(std::move(subject)) {}

BackendError::BackendError(Errc code, std::string endpoint_id, std::string sentence_id,
                           const std::string& detail)
    : Error(code, std::move(sentence_id), "endpoint " + endpoint_id + (detail.empty() ? "" : ", " + detail)),
      endpoint_id_(std::move(endpoint_id)) {}

}  // namespace debias
