#!/usr/bin/env python3
"""Builds the reference corpus, the 12-item fixture corpus and their images.

Images are schematic placards (flat colours, a few shapes and the scene
description as text); they stand in for photographs.

Usage: python3 data/make_corpus.py
"""

import hashlib
import json
import statistics
import textwrap
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path(__file__).resolve().parent

# ---------------------------------------------------------------- lexical

# (key, source, src, tgt, sense_a, sense_b, intended, caption, notes)
# sense = (label, description, markers, gold_reference)
LEXICAL = [
    ("chiave", "Passami la chiave", "it", "en",
     ("key", "door or lock key", ["key", "keys"], "Pass me the key"),
     ("wrench", "tool for turning nuts and bolts", ["wrench", "spanner"], "Pass me the wrench"),
     "wrench", "A workshop with tools on the walls; a person points at a wrench lying on the workbench.",
     "shorter than the usual length range"),
    ("plaster-gift", "The doctor gave him a plaster.", "en", "it",
     ("bandage", "adhesive bandage", ["cerotto"], "Il dottore gli ha dato un cerotto."),
     ("cast", "plaster cast for a fracture", ["gesso", "ingessatura"], "Il dottore gli ha messo il gesso."),
     "bandage", "A doctor sticks a small adhesive bandage on a boy's finger in a clinic.", None),
    ("plaster-cooking", "He put a plaster on it, because he cut his finger while cooking.", "en", "it",
     ("bandage", "adhesive bandage", ["cerotto"], "Ci ha messo un cerotto, perché si è tagliato un dito mentre cucinava."),
     ("wall", "wall plaster", ["intonaco"], "Ci ha messo dell'intonaco, perché si è tagliato un dito mentre cucinava."),
     "bandage", "A man in a kitchen holds up a finger wrapped in an adhesive bandage.",
     "co-text resolves the ambiguity; kept as a control item"),
    ("bank", "We agreed to meet at the bank yesterday afternoon.", "en", "it",
     ("finance", "financial institution", ["banca"], "Abbiamo deciso di incontrarci in banca ieri pomeriggio."),
     ("river", "edge of a river", ["riva", "sponda"], "Abbiamo deciso di incontrarci sulla riva ieri pomeriggio."),
     "river", "Two people sit on the grassy bank of a river, a bridge in the distance.", None),
    ("glasses", "Can you bring the glasses here, please?", "en", "it",
     ("spectacles", "eyeglasses", ["occhiali"], "Puoi portare qui gli occhiali, per favore?"),
     ("drinking", "drinking glasses", ["bicchieri"], "Puoi portare qui i bicchieri, per favore?"),
     "drinking", "A dinner table being set, with empty places next to the plates and a tray of drinking glasses.", None),
    ("bat", "I think the bat is under the table.", "en", "it",
     ("animal", "flying mammal", ["pipistrello"], "Penso che il pipistrello sia sotto il tavolo."),
     ("club", "baseball bat", ["mazza"], "Penso che la mazza sia sotto il tavolo."),
     "club", "A wooden baseball bat lies on the floor under a kitchen table.", None),
    ("mouse", "I saw a mouse near the desk.", "en", "it",
     ("animal", "small rodent", ["topo", "topolino"], "Ho visto un topo vicino alla scrivania."),
     ("device", "computer mouse", ["mouse"], "Ho visto un mouse vicino alla scrivania."),
     "animal", "A small grey mouse runs along the floor beside an office desk.", None),
    ("spring", "Look at that spring over there.", "en", "it",
     ("coil", "metal coil", ["molla"], "Guarda quella molla laggiù."),
     ("water", "natural water source", ["sorgente", "fonte"], "Guarda quella sorgente laggiù."),
     "water", "Water bubbles out from between rocks into a small pool in a forest.", None),
    ("board", "Please look carefully at the board.", "en", "it",
     ("whiteboard", "board for writing", ["lavagna"], "Per favore guardate attentamente la lavagna."),
     ("plank", "wooden plank", ["asse", "tavola"], "Per favore guardate attentamente l'asse."),
     "whiteboard", "A classroom whiteboard covered in diagrams; a teacher points at it.", None),
    ("seal", "The children watched the seal for hours.", "en", "it",
     ("animal", "marine mammal", ["foca"], "I bambini hanno guardato la foca per ore."),
     ("stamp", "wax or official seal", ["sigillo"], "I bambini hanno guardato il sigillo per ore."),
     "animal", "Children at an aquarium press against the glass as a seal swims past.", None),
    ("match", "We really need another match for tonight.", "en", "it",
     ("game", "sports game", ["partita"], "Abbiamo davvero bisogno di un'altra partita per stasera."),
     ("fire", "matchstick", ["fiammifero"], "Abbiamo davvero bisogno di un altro fiammifero per stasera."),
     "fire", "A person tries to light candles on a table with a nearly empty box of matches.", None),
    ("nail", "I think the nail is broken now.", "en", "it",
     ("finger", "fingernail", ["unghia"], "Penso che ora l'unghia sia rotta."),
     ("metal", "metal nail", ["chiodo"], "Penso che ora il chiodo sia rotto."),
     "metal", "A bent metal nail sticks out of a wooden plank next to a hammer.", None),
    ("pitcher", "Everyone in the room was looking at the pitcher.", "en", "it",
     ("jug", "water jug", ["brocca", "caraffa"], "Tutti nella stanza guardavano la brocca."),
     ("player", "baseball pitcher", ["lanciatore"], "Tutti nella stanza guardavano il lanciatore."),
     "player", "A television in a crowded room shows a baseball player on the mound about to throw.", None),
    ("trunk", "Be careful with the trunk.", "en", "it",
     ("tree", "tree trunk", ["tronco"], "Fai attenzione al tronco."),
     ("elephant", "elephant's trunk", ["proboscide"], "Fai attenzione alla proboscide."),
     "elephant", "An elephant at a zoo raises its trunk toward a keeper.", None),
    ("bow", "She held the bow very carefully.", "en", "it",
     ("archery", "bow for arrows", ["arco"], "Teneva l'arco con molta attenzione."),
     ("ribbon", "ribbon tied in loops", ["fiocco"], "Teneva il fiocco con molta attenzione."),
     "ribbon", "A woman holds a large red ribbon bow above a gift box.", None),
    ("note", "He left a note on the counter for you.", "en", "it",
     ("message", "written message", ["biglietto", "messaggio"], "Ti ha lasciato un biglietto sul bancone."),
     ("money", "banknote", ["banconota"], "Ti ha lasciato una banconota sul bancone."),
     "money", "A banknote lies on a shop counter next to a cash register.", None),
    ("fan", "The fan is making a strange noise.", "en", "it",
     ("device", "electric fan", ["ventilatore"], "Il ventilatore fa uno strano rumore."),
     ("supporter", "sports supporter", ["tifoso"], "Il tifoso fa uno strano rumore."),
     "device", "An electric fan spins on an office desk next to a stack of papers.", None),
    ("pupil", "The pupil looks quite large to me today.", "en", "it",
     ("eye", "opening of the iris", ["pupilla"], "La pupilla mi sembra piuttosto grande oggi."),
     ("student", "school student", ["alunno", "alunna", "allievo"], "L'alunno mi sembra piuttosto grande oggi."),
     "eye", "An eye doctor shines a small light into a patient's eye.", None),
    ("scale", "Can you check the scale first?", "en", "it",
     ("weighing", "weighing device", ["bilancia"], "Puoi controllare prima la bilancia?"),
     ("fish", "fish scales", ["squame"], "Puoi controllare prima le squame?"),
     "weighing", "A kitchen scale with a bowl of flour on top.", None),
    ("jam", "There was a jam this morning.", "en", "it",
     ("traffic", "traffic jam", ["ingorgo"], "Stamattina c'era un ingorgo."),
     ("preserve", "fruit preserve", ["marmellata"], "Stamattina c'era la marmellata."),
     "preserve", "A breakfast table with toast and an open jar of strawberry jam.", None),
    ("cell", "They showed us the cell during the visit.", "en", "it",
     ("prison", "prison cell", ["cella"], "Durante la visita ci hanno mostrato la cella."),
     ("biology", "biological cell", ["cellula"], "Durante la visita ci hanno mostrato la cellula."),
     "biology", "A microscope screen in a laboratory shows a single magnified cell.", None),
    ("chest", "He kept pointing at the chest.", "en", "it",
     ("body", "upper front of the body", ["petto", "torace"], "Continuava a indicare il petto."),
     ("box", "large storage box", ["baule", "cassapanca"], "Continuava a indicare il baule."),
     "box", "An old wooden chest stands open at the foot of a bed.", None),
    ("tank", "We walked past the tank on our way home.", "en", "it",
     ("container", "liquid container", ["serbatoio", "cisterna"], "Siamo passati davanti al serbatoio tornando a casa."),
     ("military", "armoured vehicle", ["carro armato"], "Siamo passati davanti al carro armato tornando a casa."),
     "military", "A military tank is parked in front of a museum on a city street.", None),
    ("stamp", "I need a stamp for this.", "en", "it",
     ("postage", "postage stamp", ["francobollo"], "Mi serve un francobollo per questo."),
     ("rubber", "rubber stamp", ["timbro"], "Mi serve un timbro per questo."),
     "rubber", "An office clerk presses a rubber stamp onto a document.", None),
    ("glass", "Be careful with the glass on the floor.", "en", "it",
     ("drinking", "drinking glass", ["bicchiere"], "Fai attenzione al bicchiere sul pavimento."),
     ("pane", "window glass", ["vetro", "vetri"], "Fai attenzione al vetro sul pavimento."),
     "pane", "Shards of a shattered window pane on a hallway floor.", None),
    ("tie", "Did you see that tie yesterday?", "en", "it",
     ("necktie", "necktie", ["cravatta"], "Hai visto quella cravatta ieri?"),
     ("draw", "drawn game", ["pareggio"], "Hai visto quel pareggio ieri?"),
     "draw", "A stadium scoreboard shows two to two at the end of a football match.", None),
    ("bill", "Take a close look at the bill.", "en", "it",
     ("invoice", "invoice or restaurant bill", ["conto", "fattura"], "Guarda bene il conto."),
     ("beak", "bird's beak", ["becco"], "Guarda bene il becco."),
     "beak", "A close-up of a duck with its yellow bill open.", None),
    ("coach", "The coach arrived late again this morning, as usual.", "en", "it",
     ("trainer", "sports trainer", ["allenatore"], "L'allenatore è arrivato di nuovo in ritardo stamattina, come al solito."),
     ("bus", "long-distance bus", ["pullman", "corriera"], "Il pullman è arrivato di nuovo in ritardo stamattina, come al solito."),
     "bus", "A tour bus pulls into a station where travellers wait with suitcases.", None),
    ("file", "Could you pass me the file?", "en", "it",
     ("folder", "document folder", ["fascicolo", "cartella"], "Mi passi il fascicolo?"),
     ("tool", "nail file", ["lima", "limetta"], "Mi passi la lima?"),
     "tool", "A manicure set on a table with a metal nail file.", None),
    ("mole", "The doctor looked closely at the mole.", "en", "it",
     ("skin", "spot on the skin", ["neo"], "Il dottore ha osservato attentamente il neo."),
     ("animal", "burrowing animal", ["talpa"], "Il dottore ha osservato attentamente la talpa."),
     "skin", "A dermatologist examines a small dark spot on a patient's arm with a magnifier.", None),
    ("pool", "They spent the whole evening at the pool.", "en", "it",
     ("swimming", "swimming pool", ["piscina"], "Hanno passato tutta la serata in piscina."),
     ("billiards", "pool table game", ["biliardo"], "Hanno passato tutta la serata al biliardo."),
     "billiards", "Friends play at a green billiards table in a dimly lit bar.", None),
    ("table", "Please check the table again.", "en", "it",
     ("furniture", "piece of furniture", ["tavolo"], "Per favore controlla di nuovo il tavolo."),
     ("chart", "table of figures", ["tabella"], "Per favore controlla di nuovo la tabella."),
     "chart", "A presentation slide shows a table of quarterly figures.", None),
    ("band", "I can't find the band.", "en", "it",
     ("music", "music group", ["gruppo", "band"], "Non riesco a trovare il gruppo."),
     ("elastic", "rubber band", ["elastico"], "Non riesco a trovare l'elastico."),
     "elastic", "A rubber band lies among pens and paper clips on a desk.", None),
    ("date", "I had a date yesterday.", "en", "it",
     ("appointment", "romantic appointment", ["appuntamento"], "Ieri ho avuto un appuntamento."),
     ("fruit", "date palm fruit", ["dattero"], "Ieri ho mangiato un dattero."),
     "fruit", "A plate of dried dates on a market stall; someone is eating one.", None),
    ("cabinet", "The cabinet is completely new.", "en", "it",
     ("furniture", "cupboard", ["armadietto", "mobiletto"], "L'armadietto è completamente nuovo."),
     ("government", "body of ministers", ["governo"], "Il governo è completamente nuovo."),
     "government", "Newly appointed ministers pose for a group photo in a government hall.", None),
    ("degree", "It is only one degree.", "en", "it",
     ("temperature", "unit of temperature", ["grado"], "È solo un grado."),
     ("academic", "university degree", ["laurea", "titolo"], "È solo una laurea."),
     "temperature", "A thermometer outside a window shows one degree above zero.", None),
    ("plant", "The plant needs more attention from us.", "en", "it",
     ("vegetation", "living plant", ["pianta"], "La pianta ha bisogno di più attenzione da parte nostra."),
     ("factory", "industrial plant", ["stabilimento", "impianto", "fabbrica"],
      "Lo stabilimento ha bisogno di più attenzione da parte nostra."),
     "factory", "A large industrial factory with chimneys and workers in helmets.", None),
    ("court", "We will meet at the court after work.", "en", "it",
     ("law", "law court", ["tribunale"], "Ci vediamo in tribunale dopo il lavoro."),
     ("sport", "sports court", ["campo"], "Ci vediamo al campo dopo il lavoro."),
     "sport", "Two players warm up on an outdoor tennis court.", None),
    ("pen", "The pen is behind the house.", "en", "it",
     ("writing", "writing pen", ["penna"], "La penna è dietro la casa."),
     ("enclosure", "animal enclosure", ["recinto"], "Il recinto è dietro la casa."),
     "enclosure", "Sheep inside a fenced enclosure behind a farmhouse.", None),
    ("sole", "The sole was absolutely perfect today.", "en", "it",
     ("fish", "flatfish", ["sogliola"], "La sogliola oggi era assolutamente perfetta."),
     ("shoe", "bottom of a shoe", ["suola"], "La suola oggi era assolutamente perfetta."),
     "fish", "A grilled sole fillet served on a plate at a seaside restaurant.", None),
]

# ----------------------------------------------------------------- gender

# (key, english noun phrase, italian masculine NP, italian feminine NP,
#  masculine marker(s), feminine marker(s), scene)
PROFESSIONS = [
    ("doctor", "the doctor", "il dottore", "la dottoressa", ["dottore"], ["dottoressa"],
     "in a white coat with a stethoscope in a clinic corridor"),
    ("nurse", "the nurse", "l'infermiere", "l'infermiera", ["infermiere"], ["infermiera"],
     "in hospital scrubs pushing a medicine trolley"),
    ("teacher", "the teacher", "il maestro", "la maestra", ["maestro"], ["maestra"],
     "standing at the front of a primary school classroom"),
    ("lawyer", "the lawyer", "l'avvocato", "l'avvocata", ["avvocato"], ["avvocata", "avvocatessa"],
     "in a dark suit carrying case files outside a courthouse"),
    ("director", "the director", "il direttore", "la direttrice", ["direttore"], ["direttrice"],
     "at the head of a boardroom table"),
    ("professor", "the professor", "il professore", "la professoressa", ["professore"], ["professoressa"],
     "lecturing in a university hall"),
    ("surgeon", "the surgeon", "il chirurgo", "la chirurga", ["chirurgo"], ["chirurga"],
     "in surgical scrubs and a cap outside an operating room"),
    ("cook", "the cook", "il cuoco", "la cuoca", ["cuoco"], ["cuoca"],
     "in a chef's jacket working at a restaurant stove"),
    ("waiter", "the waiter", "il cameriere", "la cameriera", ["cameriere"], ["cameriera"],
     "carrying plates through a busy restaurant"),
    ("engineer", "the engineer", "l'ingegnere", "l'ingegnera", ["ingegnere"], ["ingegnera"],
     "in a hard hat checking plans on a construction site"),
    ("secretary", "the secretary", "il segretario", "la segretaria", ["segretario"], ["segretaria"],
     "at a reception desk answering the phone"),
    ("student", "the student", "lo studente", "la studentessa", ["studente"], ["studentessa"],
     "with a backpack and notebooks in a library"),
    ("neighbour", "my neighbour", "il mio vicino", "la mia vicina", ["vicino"], ["vicina"],
     "waving from the balcony of the next apartment"),
    ("friend", "my friend", "il mio amico", "la mia amica", ["amico"], ["amica"],
     "smiling and waving at the camera in a cafe"),
    ("owner", "the owner", "il proprietario", "la proprietaria", ["proprietario"], ["proprietaria"],
     "behind the counter of a small shop"),
    ("translator", "the translator", "il traduttore", "la traduttrice", ["traduttore"], ["traduttrice"],
     "wearing headphones in an interpreting booth"),
    ("writer", "the writer", "lo scrittore", "la scrittrice", ["scrittore"], ["scrittrice"],
     "signing books at a bookshop table"),
    ("painter", "the painter", "il pittore", "la pittrice", ["pittore"], ["pittrice"],
     "holding a brush in front of an easel"),
    ("dancer", "the dancer", "il ballerino", "la ballerina", ["ballerino"], ["ballerina"],
     "rehearsing on a stage in ballet shoes"),
    ("cashier", "the cashier", "il cassiere", "la cassiera", ["cassiere"], ["cassiera"],
     "scanning groceries at a supermarket till"),
]

# English frame, Italian frame. {S}/{s}: English NP capitalised or not,
# {I}/{i}: Italian NP likewise. Italian frames avoid subject agreement.
SHORT_FRAMES = [
    ("{S} is waiting outside.", "{I} aspetta fuori."),
    ("{S} called me yesterday.", "{I} mi ha chiamato ieri."),
    ("{S} needs your signature.", "{I} ha bisogno della tua firma."),
    ("{S} will call back.", "{I} richiamerà."),
    ("{S} is on holiday.", "{I} è in ferie."),
]
SIX_FRAMES = [
    ("{S} wants to see you.", "{I} vuole vederti."),
    ("{S} will join us later.", "{I} ci raggiungerà più tardi."),
]
LONG_FRAMES = [
    ("{S} told us that the next appointment will be on Thursday morning.",
     "{I} ci ha detto che il prossimo appuntamento sarà giovedì mattina."),
    ("Yesterday {s} explained the whole procedure to everyone in the waiting room.",
     "Ieri {i} ha spiegato tutta la procedura a tutti in sala d'attesa."),
    ("{S} said that we should send the signed documents before next Friday.",
     "{I} ha detto che dovremmo inviare i documenti firmati entro venerdì prossimo."),
    ("I think {s} left the report on the table in the kitchen.",
     "Penso che {i} abbia lasciato il rapporto sul tavolo in cucina."),
]

# -------------------------------------------------------------- syntactic

# Adjective scope over a coordination: (key, english, italian frame,
# n1, n2, first-only NP, both NP, english adjective, n1 english, n2 english)
COORDINATION = [
    ("shirts", "Paul bought green shirts and shoes.", "Paul ha comprato {NP}.",
     "camicie verdi e scarpe", "camicie e scarpe verdi", "green", "shirts", "shoes"),
    ("folders", "For the conference we ordered red folders and pens for every guest.",
     "Per la conferenza abbiamo ordinato {NP} per ogni ospite.",
     "cartelline rosse e penne", "cartelline e penne rosse", "red", "folders", "pens"),
    ("sheets", "The nurse asked us to remove the dirty sheets and towels.",
     "L'infermiere ci ha chiesto di togliere {NP}.",
     "lenzuola sporche e asciugamani", "lenzuola e asciugamani sporchi", "dirty", "sheets", "towels"),
    ("chairs", "In the office we found broken chairs and tables after the move.",
     "In ufficio abbiamo trovato {NP} dopo il trasloco.",
     "sedie rotte e tavoli", "sedie e tavoli rotti", "broken", "chairs", "tables"),
    ("curtains", "My sister wants white curtains and pillows for the new apartment.",
     "Mia sorella vuole {NP} per il nuovo appartamento.",
     "tende bianche e cuscini", "tende e cuscini bianchi", "white", "curtains", "pillows"),
    ("masks", "At the pharmacy she asked for black masks and gloves for the staff.",
     "In farmacia ha chiesto {NP} per il personale.",
     "mascherine nere e guanti", "mascherine e guanti neri", "black", "masks", "gloves"),
    ("towels", "The hotel gave every guest yellow towels and slippers this morning.",
     "Stamattina l'hotel ha dato a ogni ospite {NP}.",
     "asciugamani gialli e ciabatte", "asciugamani e ciabatte gialli", "yellow", "towels", "slippers"),
    ("photos", "During the presentation he showed damaged photos and maps of the city.",
     "Durante la presentazione ha mostrato {NP} della città.",
     "foto danneggiate e mappe", "foto e mappe danneggiate", "damaged", "photos", "maps"),
    ("roses", "For the ceremony they need red roses and tulips on every table.",
     "Per la cerimonia servono {NP} su ogni tavolo.",
     "rose rosse e tulipani", "rose e tulipani rossi", "red", "roses", "tulips"),
    ("contracts", "The manager asked for printed contracts and invoices before the meeting.",
     "Il responsabile ha chiesto {NP} prima della riunione.",
     "contratti stampati e fatture", "contratti e fatture stampati", "printed", "contracts", "invoices"),
    ("cars", "Near the station we sell used cars and motorbikes every day.",
     "Vicino alla stazione vendiamo {NP} ogni giorno.",
     "auto usate e moto", "auto e moto usate", "used", "cars", "motorbikes"),
    ("cups", "Please bring clean cups and spoons to the second meeting room.",
     "Per favore porta {NP} nella seconda sala riunioni.",
     "tazze pulite e cucchiai", "tazze e cucchiai puliti", "clean", "cups", "spoons"),
    ("pills", "The doctor prescribed white pills and drops for the next two weeks.",
     "Il medico ha prescritto {NP} per le prossime due settimane.",
     "pillole bianche e gocce", "pillole e gocce bianche", "white", "pills", "drops"),
    ("boxes", "In the storage room there are wet boxes and papers everywhere.",
     "Nel magazzino ci sono {NP} dappertutto.",
     "scatole bagnate e carte", "scatole e carte bagnate", "wet", "boxes", "papers"),
    ("hats", "For the school play the children wore green hats and jackets.",
     "Per la recita scolastica i bambini indossavano {NP}.",
     "cappelli verdi e giacche", "cappelli e giacche verdi", "green", "hats", "jackets"),
    ("coins", "The museum displays golden coins and vases from the Roman period.",
     "Il museo espone {NP} del periodo romano.",
     "monete dorate e vasi", "monete e vasi dorati", "golden", "coins", "vases"),
    ("bags", "At the airport they checked the heavy bags and suitcases twice.",
     "All'aeroporto hanno controllato due volte {NP}.",
     "borse pesanti e valigie", "borse e valigie pesanti", "heavy", "bags", "suitcases"),
    ("coats", "The shop on the corner sells black coats and scarves for winter.",
     "Il negozio all'angolo vende {NP} per l'inverno.",
     "cappotti neri e sciarpe", "cappotti e sciarpe neri", "black", "coats", "scarves"),
    ("windows", "The architect showed us round windows and doors in the new design.",
     "L'architetto ci ha mostrato {NP} nel nuovo progetto.",
     "finestre rotonde e porte", "finestre e porte rotonde", "round", "windows", "doors"),
    ("branches", "After the storm we collected broken branches and tiles from the garden.",
     "Dopo la tempesta abbiamo raccolto {NP} dal giardino.",
     "rami rotti e tegole", "rami e tegole rotti", "broken", "branches", "tiles"),
]

# Relative-clause attachment resolved by participle agreement.
# (english N1, italian N1, gender, english N2, italian "of N2", gender)
RELATIVE_PAIRS = [
    ("sister", "la sorella", "f", "surgeon", "del chirurgo", "m"),
    ("son", "il figlio", "m", "teacher", "della maestra", "f"),
    ("wife", "la moglie", "f", "director", "del direttore", "m"),
    ("brother", "il fratello", "m", "nurse", "dell'infermiera", "f"),
    ("daughter", "la figlia", "f", "ambassador", "dell'ambasciatore", "m"),
    ("husband", "il marito", "m", "lawyer", "dell'avvocata", "f"),
    ("mother", "la madre", "f", "player", "del giocatore", "m"),
    ("uncle", "lo zio", "m", "dancer", "della ballerina", "f"),
    ("girlfriend", "la fidanzata", "f", "singer", "del cantante", "m"),
    ("father", "il padre", "m", "bride", "della sposa", "f"),
]
# (english predicate, italian feminine, italian masculine, fem marker, masc marker, scene)
PREDICATES = [
    ("was injured", "è stata ferita", "è stato ferito", "ferita", "ferito", "has a bandaged arm"),
    ("arrived late", "è arrivata in ritardo", "è arrivato in ritardo", "arrivata", "arrivato",
     "rushes in late while everyone else is seated"),
    ("was promoted", "è stata promossa", "è stato promosso", "promossa", "promosso",
     "receives a promotion certificate"),
    ("fell on the stairs", "è caduta dalle scale", "è caduto dalle scale", "caduta", "caduto",
     "sits at the bottom of a staircase holding a knee"),
    ("was invited", "è stata invitata", "è stato invitato", "invitata", "invitato",
     "holds up an invitation card"),
    ("was born in Naples", "è nata a Napoli", "è nato a Napoli", "nata", "nato",
     "stands in front of a Naples birth registry sign"),
    ("left early", "è partita presto", "è partito presto", "partita", "partito",
     "walks out of the door while the party goes on"),
    ("got lost", "si è persa", "si è perso", "persa", "perso",
     "studies a city map, clearly lost"),
    ("was elected", "è stata eletta", "è stato eletto", "eletta", "eletto",
     "celebrates wearing a winner's sash"),
    ("was arrested", "è stata arrestata", "è stato arrestato", "arrestata", "arrestato",
     "is led away by two police officers"),
]
# (english lead, italian lead, english tail, italian tail)
RELATIVE_FRAMES = [
    ("I spoke with", "Ho parlato con", " yesterday", " ieri"),
    ("We met", "Abbiamo incontrato", "", ""),
    ("Everyone knows", "Tutti conoscono", "", ""),
    ("The journalist photographed", "Il giornalista ha fotografato", "", ""),
]


def person(gender):
    return "woman" if gender == "f" else "man"


def cap(s):
    return s[0].upper() + s[1:]


def sense(label, description, markers, gold):
    return {"label": label, "description": description, "markers": markers, "gold_reference": gold}


def lexical_items():
    items = []
    for n, (key, src, sl, tl, a, b, intended, caption, notes) in enumerate(LEXICAL, start=1):
        item = {
            "id": f"lex-{n:02d}-{key}",
            "trigger": "lexical",
            "source_lang": sl,
            "target_lang": tl,
            "source_text": src,
            "senses": [sense(*a), sense(*b)],
            "intended_sense": intended,
            "image_path": f"images/lex-{n:02d}-{key}.png",
            "caption_gold": caption,
        }
        if notes:
            item["notes"] = notes
        if len(src.split()) < 5 or len(src.split()) > 13:
            item["relaxed_length"] = True
        items.append(item)
    return items


def gender_items():
    items = []
    short_i = six_i = long_i = 0
    for p, (key, en, it_m, it_f, mk_m, mk_f, scene) in enumerate(PROFESSIONS):
        # Sixteen professions get one short and one long sentence, the last
        # four one five-token and one six-token sentence.
        if p < 16:
            frames = [SHORT_FRAMES[short_i % len(SHORT_FRAMES)], LONG_FRAMES[long_i % len(LONG_FRAMES)]]
            short_i += 1
            long_i += 1
        else:
            frames = [SHORT_FRAMES[short_i % len(SHORT_FRAMES)], SIX_FRAMES[six_i % len(SIX_FRAMES)]]
            short_i += 1
            six_i += 1
        for j, (fe, fi) in enumerate(frames):
            female = (p + j) % 2 == 0
            src = fe.format(S=cap(en), s=en)
            gold_m = fi.format(I=cap(it_m), i=it_m)
            gold_f = fi.format(I=cap(it_f), i=it_f)
            n = len(items) + 1
            items.append({
                "id": f"gen-{n:02d}-{key}",
                "trigger": "gender",
                "source_lang": "en",
                "target_lang": "it",
                "source_text": src,
                "senses": [
                    sense("female", f"the {key} is a woman", mk_f, gold_f),
                    sense("male", f"the {key} is a man", mk_m, gold_m),
                ],
                "intended_sense": "female" if female else "male",
                "image_path": f"images/gen-{n:02d}-{key}.png",
                "caption_gold": f"A {'woman' if female else 'man'} {scene}.",
            })
    return items


def syntactic_items():
    items = []
    for k, (key, src, frame, first, both, adj, n1, n2) in enumerate(COORDINATION):
        n = len(items) + 1
        intended = "both" if k % 2 == 0 else "first_only"
        caption = (
            f"A shop display in which both the {n1} and the {n2} are {adj}."
            if intended == "both"
            else f"A shop display with {adj} {n1} next to {n2} that are not {adj}."
        )
        items.append({
            "id": f"syn-{n:02d}-{key}",
            "trigger": "syntactic",
            "source_lang": "en",
            "target_lang": "it",
            "source_text": src,
            "senses": [
                sense("first_only", f"only the {n1} are {adj}", [first], frame.format(NP=first)),
                sense("both", f"both the {n1} and the {n2} are {adj}", [both], frame.format(NP=both)),
            ],
            "intended_sense": intended,
            "image_path": f"images/syn-{n:02d}-{key}.png",
            "caption_gold": caption,
        })
    for k in range(20):
        n1, it1, g1, n2, it2, g2 = RELATIVE_PAIRS[k % len(RELATIVE_PAIRS)]
        pe, it_pf, it_pm, mk_f, mk_m, scene = PREDICATES[(k * 3) % len(PREDICATES)]
        le, li, te, ti = RELATIVE_FRAMES[k % len(RELATIVE_FRAMES)]
        src = f"{le} the {n1} of the {n2} who {pe}{te}."
        # Italian leads ending in a preposition contract with the article.
        head = it1
        if li.endswith(" del"):
            li = li[: -len(" del")]
            head = {"la": "della", "il": "del", "lo": "dello"}[it1.split()[0]] + " " + it1.split(" ", 1)[1]
        pred_first = it_pf if g1 == "f" else it_pm
        pred_second = it_pf if g2 == "f" else it_pm
        mark_first = mk_f if g1 == "f" else mk_m
        mark_second = mk_f if g2 == "f" else mk_m
        gold_first = f"{li} {head} {it2} che {pred_first}{ti}."
        gold_second = f"{li} {head} {it2} che {pred_second}{ti}."
        intended = "first_noun" if k % 2 == 0 else "second_noun"
        g_att, g_other = (g1, g2) if intended == "first_noun" else (g2, g1)
        n = len(items) + 1
        items.append({
            "id": f"syn-{n:02d}-{n1}-{n2}",
            "trigger": "syntactic",
            "source_lang": "en",
            "target_lang": "it",
            "source_text": src,
            "senses": [
                sense("first_noun", f"the {n1} {pe}", [mark_first], gold_first),
                sense("second_noun", f"the {n2} {pe}", [mark_second], gold_second),
            ],
            "intended_sense": intended,
            "image_path": f"images/syn-{n:02d}-{n1}-{n2}.png",
            "caption_gold": f"A {person(g_att)} {scene}; a {person(g_other)} stands beside them, unaffected.",
        })
    return items


def colour(seed):
    h = hashlib.sha256(seed.encode()).digest()
    return tuple(150 + b % 100 for b in h[:3]), tuple(40 + b % 120 for b in h[3:6])


def draw_image(path, item, size, with_text):
    bg, fg = colour(item["id"])
    img = Image.new("RGB", size, bg)
    d = ImageDraw.Draw(img)
    h = hashlib.sha256(item["id"].encode()).digest()
    w, ht = size
    for i in range(3):
        x0 = h[6 + i] % (w // 2)
        y0 = h[9 + i] % (ht // 2)
        x1 = x0 + w // 4 + h[12 + i] % (w // 3)
        y1 = y0 + ht // 4 + h[15 + i] % (ht // 3)
        shade = tuple((c + 40 * i) % 256 for c in fg)
        if i % 2:
            d.ellipse([x0, y0, x1, y1], fill=shade)
        else:
            d.rectangle([x0, y0, x1, y1], fill=shade)
    if with_text:
        lines = textwrap.wrap(item["caption_gold"], width=40)
        y = ht - 12 * len(lines) - 6
        d.rectangle([0, y - 4, w, ht], fill=(255, 255, 255))
        for line in lines:
            d.text((6, y), line, fill=(0, 0, 0))
            y += 12
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, optimize=True)


def write_corpus(directory, items, size, with_text):
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "corpus.jsonl", "w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item, ensure_ascii=False) + "\n")
    for item in items:
        draw_image(directory / item["image_path"], item, size, with_text)


def report(items):
    by = {}
    for it in items:
        by.setdefault(it["trigger"], []).append(len(it["source_text"].split()))
    for trig, lens in by.items():
        print(f"{trig:10s} n={len(lens)} sum={sum(lens)} mean={statistics.mean(lens):.3f} "
              f"sd={statistics.stdev(lens):.3f} min={min(lens)} max={max(lens)}")
    allv = [l for v in by.values() for l in v]
    print(f"{'overall':10s} n={len(allv)} mean={statistics.mean(allv):.3f} sd={statistics.stdev(allv):.3f}")


def main():
    lex, gen, syn = lexical_items(), gender_items(), syntactic_items()
    items = lex + gen + syn
    report(items)
    write_corpus(ROOT / "reference", items, (320, 240), True)
    fixture = lex[:4] + gen[:4] + syn[:4]
    write_corpus(ROOT / "fixture", fixture, (64, 48), False)


if __name__ == "__main__":
    main()
