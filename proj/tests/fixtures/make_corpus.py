# Regenerates tests/fixtures/corpus.  Usage: make_corpus.py SENTENCES_PER_DOC DOCS [OUT_DIR]
import random
rng = random.Random(20261016)
cultivars = ["Ambermoor", "Silvendra", "Kestrel-7", "Duskwheat", "Larkhaven", "Orinoco-3", "Pellmar", "Quillon", "Ravensby", "Tamsin-12"]
genes = ["Xa21", "Sub1A", "Pik-h", "GS3", "Hd1", "SD1", "DRO1", "Ghd7", "OsNAC9", "Bph14"]
traits = ["submergence tolerance", "blast resistance", "grain length", "drought tolerance", "heading date", "plant height", "root depth", "brown planthopper resistance"]
regions = ["Varnholt", "Esterline", "Cobalt Valley", "Marrowdale", "Windmere", "Hollis Plain"]
institutes = ["Varnholt Institute", "Esterline Station", "Cobalt Agronomy Centre", "Marrowdale College"]
people = ["Dr Ilse Moravec", "Dr Tomas Quade", "Dr Nia Okafor", "Dr Rahul Venn", "Dr Sofia Lindqvist"]
templates = [
  "The cultivar {c} carries the {g} allele, which confers {t}.",
  "Field trials in {r} showed that {c} outperformed {c2} under flooded conditions.",
  "{p} at the {i} first mapped {g} to chromosome {n}.",
  "Breeders crossed {c} with {c2} to combine {t} with high yield.",
  "The {g} locus interacts with {g2} to regulate {t}.",
  "Farmers in {r} adopted {c} after the {y} monsoon season.",
  "{c} matures in {d} days and is grown widely in {r}.",
  "The {i} maintains seed stocks of {c} and {c2}.",
  "{p} reported that {g} expression rises sharply during {t2} stress.",
  "Marker-assisted selection for {g} shortened the {c} breeding cycle by {n} seasons.",
  "In {r}, yields of {c} averaged {w} tonnes per hectare.",
  "{c2} lacks {g}, so it depends on fungicide in {r}.",
]
def sentence():
    c, c2 = rng.sample(cultivars, 2)
    g, g2 = rng.sample(genes, 2)
    return rng.choice(templates).format(c=c, c2=c2, g=g, g2=g2, t=rng.choice(traits), t2=rng.choice(["drought", "salt", "cold", "flood"]),
        r=rng.choice(regions), i=rng.choice(institutes), p=rng.choice(people), n=rng.randint(1, 12), y=rng.randint(1998, 2024),
        d=rng.randint(95, 150), w=round(rng.uniform(3.5, 9.0), 1))
import pathlib
import sys
per_doc = int(sys.argv[1]); docs = int(sys.argv[2])
out = pathlib.Path(sys.argv[3] if len(sys.argv) > 3 else pathlib.Path(__file__).parent / "corpus")
for k in range(docs):
    paras = []
    for _ in range(3):
        paras.append(" ".join(sentence() for _ in range(per_doc // 3)))
    (out / f"doc{k:02d}.txt").open("w").write("\n\n".join(paras) + "\n")
