"""End-to-end check of the installed extension module."""

import tempfile

import autoctx


def main():
    clips = autoctx.generate_corpus(48, seed=11, duration_s=4.0)
    train, test = clips[:32], clips[32:]
    chain = autoctx.Chain.train(train, seed=3)
    print("stages:", chain.stages, "config", chain.config_hash[:12])

    report = chain.evaluate(test, seed=5, segments=5)
    for stage, r in report.items():
        print(f"{stage}: accuracy {r['accuracy']:.2f}")

    pred = chain.predict(test[0], seed=6, segments=5)
    desc = autoctx.identify(pred)
    print("clip", test[0].source_id, "->", desc)

    records = [
        {"id": "generic", "descriptor": "(*, *, *, *, *, *, *)", "kind": "misfire", "n_train": 500},
        {"id": "by-fuel", "descriptor": f"({test[0].labels['fuel']}, *, *, *, *, *, *)", "kind": "misfire", "n_train": 80},
    ]
    sel = autoctx.select_model(desc, "misfire", records)
    print("selected", sel["id"], "fallback" if sel["fell_back_to_root"] else "")

    with tempfile.TemporaryDirectory() as d:
        chain.save(f"{d}/chain.bin")
        assert autoctx.Chain.load(f"{d}/chain.bin").predict(test[0], seed=6, segments=5) == pred
        path = test[0].write(d)
        assert autoctx.ingest(path).source_id == test[0].source_id

    try:
        autoctx.Descriptor("not a descriptor")
    except autoctx.AutoctxError as e:
        print("error surfaced:", e)
    else:
        raise SystemExit("expected AutoctxError")
    print("smoke test ok")


if __name__ == "__main__":
    main()
