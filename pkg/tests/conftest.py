import numpy as np
import pytest

from h2auth.classify import FeatureKind, train_linear_svm
from h2auth.corpus import corpus_similarity_features, speaker_corpus_features
from h2auth.protocol import DecisionPipeline
from h2auth.attack_detect import GateConfig
from h2auth.synth import CorpusPlan, SpeakerCorpusPlan

FS = 44100


@pytest.fixture(scope="session")
def similarity_training():
    plan = CorpusPlan(n_drones=4, pairs_per_drone=12, seed=101)
    X, y, groups, pair_ids = corpus_similarity_features(plan)
    return X, y, groups, pair_ids


@pytest.fixture(scope="session")
def similarity_model(similarity_training):
    X, y, _, _ = similarity_training
    return train_linear_svm(X, y, feature_kind=FeatureKind.SIMILARITY)


@pytest.fixture(scope="session")
def speaker_training():
    plan = SpeakerCorpusPlan(n_live=45, n_replay=45, n_benign=45, seed=102)
    X, meta = speaker_corpus_features(plan)
    return X, meta


@pytest.fixture(scope="session")
def liveness_model(speaker_training):
    X, meta = speaker_training
    return train_linear_svm(X, meta["presence"],
                            feature_kind=FeatureKind.LOUDSPEAKER_PRESENCE)


@pytest.fixture(scope="session")
def content_model(speaker_training):
    X, meta = speaker_training
    speaker_rows = meta["presence"] == 1
    return train_linear_svm(X[speaker_rows], meta["content"][speaker_rows],
                            feature_kind=FeatureKind.LOUDSPEAKER_CONTENT)


@pytest.fixture(scope="session")
def pipeline(similarity_model, liveness_model, content_model):
    return DecisionPipeline(similarity_model=similarity_model,
                            gate=GateConfig(),
                            liveness_model=liveness_model,
                            content_model=content_model)


@pytest.fixture(scope="session")
def pipeline_level_only(similarity_model):
    return DecisionPipeline(similarity_model=similarity_model,
                            gate=GateConfig(liveness_enabled=False))


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, similarity_model, liveness_model,
              content_model):
    from h2auth.classify import save_model
    d = tmp_path_factory.mktemp("models")
    save_model(similarity_model, d / "similarity.json")
    save_model(liveness_model, d / "liveness.json")
    save_model(content_model, d / "content.json")
    return d
